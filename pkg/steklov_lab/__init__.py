"""Finite-element lab for mixed Steklov eigenproblems and their eigenvalue splitting."""

__version__ = "0.1.0"
