"""Logging and seeding utilities."""
