# catalog/__init__.py
"""ICD-10-CM catalog parsing and lookup."""
