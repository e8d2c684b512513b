"""Bayesian species distribution modelling with misclassified reports."""

__version__ = "0.1.0"
