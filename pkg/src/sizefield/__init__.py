"""Octree mesh-size fields computed from triangulated surfaces."""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
