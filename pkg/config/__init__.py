# config/__init__.py
"""Settings and experiment configuration."""
