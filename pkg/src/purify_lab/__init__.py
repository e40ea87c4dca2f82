"""Numerical toolkit for the random purification channel and quantum divergences."""

__version__ = "0.1.0"
