"""Pydantic models for run configuration and reports."""
