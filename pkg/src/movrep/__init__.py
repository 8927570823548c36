"""Approximation algorithms for movement repairmen problems."""

__version__ = "0.1.0"
