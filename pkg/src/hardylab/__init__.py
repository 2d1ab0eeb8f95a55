"""Weighted Hardy constants, p-harmonic barriers and decay fits on planar domains."""

__version__ = "0.1.0"
