# corpus/__init__.py
"""Synthetic benchmark notes and gold labels."""
