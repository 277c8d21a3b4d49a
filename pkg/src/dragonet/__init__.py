"""Dual-input Transformer classifier for two-level transaction taxonomies."""

__version__ = "0.1.0"
