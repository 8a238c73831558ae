"""Optimal linear decisions for linear-quadratic team problems."""

__version__ = "0.1.0"
