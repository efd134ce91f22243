"""Simulation lab for implicit semantic communication over knowledge graphs."""
from . import errors
from ._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "errors", "__version__"]
