# prompts/__init__.py
"""Prompt templates and builders."""
