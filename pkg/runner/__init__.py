# runner/__init__.py
"""Experiment grid execution and reporting."""
