"""Robust amortized posterior estimation under model misspecification."""

__version__ = "0.1.0"
