# analyzers/__init__.py
"""Scoring of model responses."""
