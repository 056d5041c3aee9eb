"""Distributed model-free and model-based stochastic source seeking."""

__version__ = "0.1.0"
