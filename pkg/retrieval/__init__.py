# retrieval/__init__.py
"""Flat retrieval over catalog lines and context documents."""
