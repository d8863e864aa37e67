"""Approximate Calabi-Yau metrics with conical singularities along lines in C^2."""
__version__ = "0.1.0"
