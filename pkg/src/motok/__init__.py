"""Discrete motion tokens for two-way motion/text translation."""

__version__ = "0.1.0"
