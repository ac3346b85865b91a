"""Ensemble multilevel Monte Carlo finite elements for the random heat equation."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
