"""Information causality laboratory for multi-receiver random access codes."""

__version__ = "0.1.0"
