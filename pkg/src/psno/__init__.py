"""Operator-learning surrogates for single-machine infinite-bus transient simulation."""

__version__ = "0.1.0"
