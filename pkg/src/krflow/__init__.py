"""Numerical laboratory for Kahler-Ricci flow on tori and on the projective line."""

__version__ = "0.1.0"
