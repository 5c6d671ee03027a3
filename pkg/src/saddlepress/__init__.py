"""Saddle-point pressure numerics on example diffeomorphisms."""
from .kernels import BACKEND
from .systems import CATALOG, Region, make_system

__version__ = "0.1.0"
__all__ = ["BACKEND", "CATALOG", "Region", "make_system", "__version__"]
