"""Deterministic multi-cell radio-network laboratory."""

__version__ = "1.0.0"
