"""Collapse-free measurement chains and covariant region-based reduced states."""

__version__ = "0.1.0"
