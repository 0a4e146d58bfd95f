"""Trace-link validation and recovery for stakeholder/system requirements."""

__version__ = "0.1.0"
