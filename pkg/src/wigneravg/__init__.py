"""Wigner-transform toolkit for velocity averaging, purity tests and quantum hydrodynamics."""
from ._accel import backend_name

__version__ = "0.1.0"

__all__ = ["__version__", "backend_name"]
