"""Sparse hyperspectral unmixing against large spectral libraries."""

__version__ = "0.1.0"
