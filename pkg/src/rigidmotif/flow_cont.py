"""Conditional flow matching on SE(3)^K.

Frames are stored as arrays: rotations ``(K, 3, 3)`` and translations
``(K, 3)``. Rotation velocities are body coefficients ``w`` (``R exp(hat(w))``),
translation velocities are plain 3-vectors in Angstrom per unit time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import so3
from .so3 import AngleNearPi

T_MAX = 1.0 - 1e-3
ANTIPODAL_KICK = 1e-3


class ShapeMismatch(ValueError):
    pass


@dataclass
class FramePathSample:
    t: float
    rot0: np.ndarray
    trans0: np.ndarray
    rot1: np.ndarray  # symmetry-aligned target
    trans1: np.ndarray
    rot_t: np.ndarray
    trans_t: np.ndarray
    target_rot_vel: np.ndarray
    target_trans_vel: np.ndarray

    @property
    def K(self) -> int:
        return len(self.rot_t)


@dataclass(frozen=True)
class RotSchedule:
    """Multiplier ``g(t)`` on the rotation velocity during integration."""

    kind: str = "constant"
    c: float = 10.0

    def __post_init__(self):
        if self.kind not in ("constant", "exponential"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        if self.kind == "exponential" and self.c <= 0:
            raise ValueError("c must be positive")

    def g(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.ones_like(t)
        c = self.c
        return c * np.exp(-c * t) / -np.expm1(-c)


def sample_prior(K: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """N(0, I) translations and Haar rotations for ``K`` frames."""
    if K < 1:
        raise ValueError("K must be >= 1")
    trans = rng.standard_normal((K, 3))
    rots = so3.sample_uniform_so3(rng, K)
    return rots, trans


def conditional_velocity(rot_t, trans_t, rot1, trans1, t: float, trans0=None):
    """Velocities of the geodesic / straight conditional path at ``t``.

    The rotation part is ``log(R_t^T R_1) / (1 - t)`` (body frame). The
    translation part is ``x1 - x0`` when ``trans0`` is given, else the
    equivalent on-path form ``(x1 - x_t) / (1 - t)``.
    """
    if not t < 1.0:
        raise ValueError("t must be < 1")
    rot_vel = so3.log_at(rot_t, rot1) / (1.0 - t)
    if trans0 is not None:
        trans_vel = np.asarray(trans1, dtype=float) - np.asarray(trans0, dtype=float)
    else:
        trans_vel = (np.asarray(trans1, dtype=float) - np.asarray(trans_t, dtype=float)) / (1.0 - t)
    return rot_vel, trans_vel


def _sym_stack(sym) -> np.ndarray:
    s = np.asarray(sym, dtype=float)
    if s.ndim == 2:
        s = s[None]
    if len(s) == 0:
        raise ValueError("empty symmetry group")
    return s


def align_target_rotation(rot_t, rot1, sym) -> np.ndarray:
    """``S* R1`` with ``S*`` maximising ``tr(R_t^T S R1)``; first maximiser wins ties."""
    s = _sym_stack(sym)
    rot_t = np.asarray(rot_t, dtype=float)
    cand = s @ np.asarray(rot1, dtype=float)
    traces = np.einsum("ij,kij->k", rot_t, cand)
    return cand[int(np.argmax(traces))]


def align_targets(rots_t, rots1, syms) -> np.ndarray:
    return np.stack([align_target_rotation(a, b, s) for a, b, s in zip(rots_t, rots1, syms)])


def _path(rot0, trans0, rot1, trans1, t):
    w = so3.log_at(rot0, rot1)
    rot_t = so3.exp_at(rot0, t * w)
    trans_t = (1.0 - t) * trans0 + t * trans1
    return w, rot_t, trans_t


def make_training_target(rot0, trans0, rot1, trans1, syms, t: float,
                         rng: np.random.Generator | None = None) -> FramePathSample:
    """Symmetry-aligned interpolant and conditional velocities at time ``t``.

    Alignment uses the noisy rotation, so targets are chosen after ``R_t``
    is known. An antipodal prior draw is nudged by a random 1e-3 rad turn.
    """
    if not 0.0 <= t < 1.0:
        raise ValueError("t must lie in [0, 1)")
    rot0 = np.array(rot0, dtype=float)
    trans0 = np.asarray(trans0, dtype=float)
    rot1 = np.asarray(rot1, dtype=float)
    trans1 = np.asarray(trans1, dtype=float)
    if not (len(rot0) == len(trans0) == len(rot1) == len(trans1) == len(syms)):
        raise ShapeMismatch("frame counts differ")
    rng = rng or np.random.default_rng(0)
    # alignment is done against R_0 first, then refined against R_t
    aligned = align_targets(rot0, rot1, syms)
    for _ in range(8):
        try:
            w, rot_t, trans_t = _path(rot0, trans0, aligned, trans1, t)
        except AngleNearPi:
            bad = np.pi - so3.geodesic_dist(rot0, aligned) < so3.EPS_CUT
            kick = rng.standard_normal((int(bad.sum()), 3))
            kick *= ANTIPODAL_KICK / np.linalg.norm(kick, axis=1, keepdims=True)
            rot0[bad] = so3.exp_at(rot0[bad], kick)
            continue
        realigned = align_targets(rot_t, rot1, syms)
        if np.allclose(realigned, aligned):
            break
        aligned = realigned
    else:
        raise AngleNearPi("could not build a non-antipodal path")
    rot_vel = w / (1.0 - t)
    trans_vel = trans1 - trans0
    return FramePathSample(t, rot0, trans0, aligned, trans1, rot_t, trans_t, rot_vel, trans_vel)


def sample_time(rng: np.random.Generator, size=None, t_max: float = T_MAX):
    return rng.uniform(0.0, t_max, size)


def se3_loss(pred_rot_vel, pred_trans_vel, sample: FramePathSample) -> float:
    """Sum over frames of squared translation and body-rotation velocity errors."""
    pr = np.asarray(pred_rot_vel, dtype=float)
    pt = np.asarray(pred_trans_vel, dtype=float)
    if pr.shape != sample.target_rot_vel.shape or pt.shape != sample.target_trans_vel.shape:
        raise ShapeMismatch(f"prediction shapes {pr.shape}, {pt.shape} vs K={sample.K}")
    return float(np.sum((pr - sample.target_rot_vel) ** 2) + np.sum((pt - sample.target_trans_vel) ** 2))


def integrate_step(rots, trans, rot_vel, trans_vel, t: float, h: float,
                   sched: RotSchedule = RotSchedule()) -> tuple[np.ndarray, np.ndarray]:
    """One Euler step on SE(3)^K with exact exponential updates for rotations."""
    if h <= 0 or t + h > 1.0 + 1e-12:
        raise ValueError("need h > 0 and t + h <= 1")
    scale = h * float(sched.g(t))
    rots = so3.exp_at(rots, scale * np.asarray(rot_vel, dtype=float))
    trans = np.asarray(trans, dtype=float) + h * np.asarray(trans_vel, dtype=float)
    return rots, trans


def time_grid(steps: int) -> np.ndarray:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    return np.linspace(0.0, 1.0, steps + 1)
