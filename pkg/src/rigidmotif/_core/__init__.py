"""Batched SO(3) kernels with a compiled fast path.

``BACKEND`` is ``"cython"`` when the extension imported and ``"numpy"``
otherwise. Setting ``RIGIDMOTIF_PURE=1`` forces the numpy fallback.
"""
import os

from . import _so3_py as py

if os.environ.get("RIGIDMOTIF_PURE"):
    _impl = py
    BACKEND = "numpy"
else:
    try:
        from . import _so3_ext as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = py
        BACKEND = "numpy"

exp_batch = _impl.exp_batch
log_batch = _impl.log_batch
angle_batch = _impl.angle_batch
right_exp_batch = _impl.right_exp_batch

__all__ = ["BACKEND", "exp_batch", "log_batch", "angle_batch", "right_exp_batch", "py"]
