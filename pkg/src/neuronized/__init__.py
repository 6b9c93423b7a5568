"""Neuronized shrinkage priors for sparse linear regression."""

__version__ = "0.1.0"
