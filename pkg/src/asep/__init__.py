"""Exact finite-time distributions for the asymmetric simple exclusion process on ℤ."""

__version__ = "0.1.0"
