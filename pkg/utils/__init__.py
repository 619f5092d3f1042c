# utils/__init__.py
"""Logging, exceptions and shared helpers."""
