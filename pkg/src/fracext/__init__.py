"""Numerical laboratory for boundary-reaction problems and the fractional Laplacian."""

__version__ = "0.1.0"
