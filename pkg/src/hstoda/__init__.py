"""Deformed Toda-type hierarchies on truncated Hilbert-Schmidt operators."""

__version__ = "0.1.0"
