"""SO(3) and SE(3) geometry on plain numpy arrays.

Conventions used throughout the package:

* Atom coordinates are row vectors and rotations act on the right, so a
  motif with canonical pose ``P`` (N x 3) placed by frame ``(R, x)`` has
  coordinates ``P @ R + x``.
* Tangent vectors are stored as 3-vectors ``w`` of body coefficients at a
  base rotation ``B``: the tangent matrix is ``B @ hat(w)`` and
  ``exp_at(B, w) = B @ expm(hat(w))``. Their SO(3) norm
  ``sqrt(tr(U^T U) / 2)`` equals ``|w|``.
* ``hat`` follows the usual cross-product convention, so
  ``exp_so3([0, 0, pi/2])`` is ``[[0, -1, 0], [1, 0, 0], [0, 0, 1]]``.

All functions broadcast over leading batch dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core

EPS_CUT = 1e-6
ORTHO_TOL = 1e-12


class AngleNearPi(ValueError):
    """Relative rotation lies within ``EPS_CUT`` of the cut locus."""


def hat(w):
    w = np.asarray(w, dtype=float)
    return _core.py._hat(w)


def vee(m):
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [m[..., 2, 1] - m[..., 1, 2], m[..., 0, 2] - m[..., 2, 0], m[..., 1, 0] - m[..., 0, 1]], axis=-1
    )


def exp_so3(w):
    """Rodrigues exponential of rotation vector(s) ``w``."""
    w = np.asarray(w, dtype=float)
    flat = w.reshape(-1, 3)
    return _core.exp_batch(flat).reshape(w.shape[:-1] + (3, 3))


def log_so3(m, eps_cut: float = EPS_CUT):
    """Rotation vector(s) of ``m``; raises :class:`AngleNearPi` at the cut locus."""
    m = np.asarray(m, dtype=float)
    flat = m.reshape(-1, 3, 3)
    w, flag = _core.log_batch(flat, eps_cut)
    if flag.any():
        raise AngleNearPi(f"{int(flag.sum())} rotation(s) within {eps_cut:g} rad of pi")
    return w.reshape(m.shape[:-2] + (3,))


def rotation_angle(m):
    """Angle of rotation(s) ``m`` in [0, pi]."""
    m = np.asarray(m, dtype=float)
    flat = m.reshape(-1, 3, 3)
    eye = np.broadcast_to(np.eye(3), flat.shape)
    return _core.angle_batch(eye, flat).reshape(m.shape[:-2])


def orthogonality_error(m):
    m = np.asarray(m, dtype=float)
    return np.linalg.norm(np.swapaxes(m, -1, -2) @ m - np.eye(3), axis=(-2, -1))


def project_to_so3(m):
    """Nearest proper rotation (polar factor via SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    u = u.copy()
    u[..., :, 2] *= d[..., None]
    return u @ vt


def reorthonormalise(m, tol: float = ORTHO_TOL):
    """Project onto SO(3) only where the orthogonality drift exceeds ``tol``."""
    m = np.asarray(m, dtype=float)
    bad = orthogonality_error(m) > tol
    if not np.any(bad):
        return m
    if m.ndim == 2:
        return project_to_so3(m)
    out = m.copy()
    out[bad] = project_to_so3(m[bad])
    return out


def exp_at(base, w):
    """``base @ exp(hat(w))``, re-orthonormalised if it drifted."""
    base = np.asarray(base, dtype=float)
    w = np.asarray(w, dtype=float)
    shape = np.broadcast_shapes(base.shape[:-2], w.shape[:-1])
    b = np.broadcast_to(base, shape + (3, 3)).reshape(-1, 3, 3)
    ww = np.broadcast_to(w, shape + (3,)).reshape(-1, 3)
    out = _core.right_exp_batch(b, ww, 1.0).reshape(shape + (3, 3))
    return reorthonormalise(out)


def relative(base, target):
    """``base^T @ target`` batched."""
    return np.swapaxes(np.asarray(base, dtype=float), -1, -2) @ np.asarray(target, dtype=float)


def log_at(base, target, eps_cut: float = EPS_CUT):
    """Body coefficients ``w`` with ``exp_at(base, w) == target``."""
    return log_so3(relative(base, target), eps_cut)


def geodesic(r0, r1, t):
    """Constant-speed geodesic ``exp_{r0}(t log_{r0}(r1))``."""
    w = log_at(r0, r1)
    t = np.asarray(t, dtype=float)
    return exp_at(r0, t[..., None] * w if t.ndim else t * w)


def geodesic_dist(a, b):
    """Riemannian distance ``arccos((tr(a^T b) - 1) / 2)``.

    Evaluated as ``atan2(sin, cos)`` of the relative rotation, which is the
    same quantity without arccos's loss of precision near 0 and pi.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    shape = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    aa = np.broadcast_to(a, shape + (3, 3)).reshape(-1, 3, 3)
    bb = np.broadcast_to(b, shape + (3, 3)).reshape(-1, 3, 3)
    out = _core.angle_batch(aa, bb).reshape(shape)
    return float(out) if out.ndim == 0 else out


def quat_to_matrix(q):
    """Unit quaternion ``(w, x, y, z)`` to matrix (Hamilton, active, column form)."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - z * w)
    m[..., 0, 2] = 2 * (x * z + y * w)
    m[..., 1, 0] = 2 * (x * y + z * w)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - x * w)
    m[..., 2, 0] = 2 * (x * z - y * w)
    m[..., 2, 1] = 2 * (y * z + x * w)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def sample_uniform_so3(rng: np.random.Generator, size=None):
    """Haar-uniform rotation(s) from normalised Gaussian quaternions."""
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    q = rng.standard_normal(shape + (4,))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return quat_to_matrix(q)


def haar_angle_cdf(theta):
    """CDF of the rotation angle of a Haar-random rotation."""
    theta = np.asarray(theta, dtype=float)
    return (theta - np.sin(theta)) / np.pi


def is_rotation(m, tol: float = 1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    return bool(np.all(orthogonality_error(m) <= tol) and np.all(np.abs(np.linalg.det(m) - 1.0) <= tol))


def axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    return exp_so3(axis / np.linalg.norm(axis) * angle)


@dataclass(frozen=True)
class RigidFrame:
    """SE(3) element placing row-vector points as ``p @ rot + trans``."""

    rot: np.ndarray
    trans: np.ndarray

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.rot + self.trans

    def compose(self, other: "RigidFrame") -> "RigidFrame":
        """Frame equal to applying ``self`` first and then ``other``."""
        return RigidFrame(self.rot @ other.rot, self.trans @ other.rot + other.trans)

    def inverse(self) -> "RigidFrame":
        return RigidFrame(self.rot.T, -self.trans @ self.rot.T)

    @classmethod
    def identity(cls) -> "RigidFrame":
        return cls(np.eye(3), np.zeros(3))
