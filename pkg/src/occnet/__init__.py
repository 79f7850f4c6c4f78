"""Occupational stratification networks from household survey micro-data."""

__version__ = "0.1.0"
