"""Spatio-temporal HDP for trajectory activity analysis."""

__version__ = "0.1.0"
