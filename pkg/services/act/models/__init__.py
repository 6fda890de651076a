"""Encoders, score heads and checkpoint persistence."""
