"""Rigid-motif decomposition and multimodal SE(3) x token flow matching."""
from ._core import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
