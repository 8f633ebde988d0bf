"""Numerical laboratory for singularity propagation along Martinet singular curves."""

__version__ = "0.1.0"
