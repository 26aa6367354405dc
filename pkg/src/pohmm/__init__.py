"""Bayesian inference for time-evolving partial orders from rank lists."""

__version__ = "0.1.0"
