"""Masked model-based actor-critic with an exact bound-verification lab."""

__version__ = "0.1.0"
