"""Numerical laboratory for Kostlan random polynomials and the geometry of their zero sets."""
__version__ = "0.1.0"
