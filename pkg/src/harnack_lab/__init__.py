"""Numerical laboratory for divergence-form elliptic and parabolic equations with drift."""

__version__ = "0.1.0"
