"""Probabilistic typological implications over a forest-structured Bayesian network."""

MISSING = -1

__version__ = "0.1.0"
