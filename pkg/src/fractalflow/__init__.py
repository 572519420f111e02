"""fractalflow: transport flows, regular Lagrangian ensembles and dimension
estimation for space-time singular sets with prescribed fractal structure."""

__version__ = "0.1.0"

from ._kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
