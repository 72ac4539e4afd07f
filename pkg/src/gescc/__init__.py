"""Capacity credit of generalized energy storage by sequential Monte Carlo simulation."""

__version__ = "0.1.0"
