"""Strand space analysis of cryptographic protocols."""

__version__ = "0.1.0"
