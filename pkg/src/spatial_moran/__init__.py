"""Stochastic tunnelling in spatial Moran / biased voter models."""

__version__ = "0.1.0"
