# communication/__init__.py
"""Client for the local inference server."""
