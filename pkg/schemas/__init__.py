# schemas/__init__.py
"""Output structures and response validation."""
