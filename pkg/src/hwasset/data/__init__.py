"""Bundled data files (price table)."""
