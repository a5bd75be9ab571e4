"""Printer-protocol intrusion detection from TCP session metadata."""

__version__ = "0.1.0"
