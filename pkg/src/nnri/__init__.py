"""Nearest-neighbor ratio imputation for compositional survey items."""

__version__ = "0.1.0"
