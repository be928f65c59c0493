"""Vectorised numpy implementation of the batched SO(3) kernels.

Every function takes flat batches: rotation vectors ``(n, 3)`` and
matrices ``(n, 3, 3)``. The compiled module ``_so3_ext`` exposes the same
signatures and must agree with these to round-off.
"""
import numpy as np

# Below this angle exp/log use Taylor series.
SMALL_ANGLE = 1e-4
# Above this angle log reads the axis off the symmetric part.
LARGE_ANGLE = 3.0


def _hat(w):
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def exp_batch(w):
    w = np.ascontiguousarray(w, dtype=np.float64)
    th2 = np.einsum("ni,ni->n", w, w)
    th = np.sqrt(th2)
    small = th < SMALL_ANGLE
    safe = np.where(small, 1.0, th)
    a = np.where(small, 1.0 - th2 / 6.0 + th2 * th2 / 120.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - th2 / 24.0 + th2 * th2 / 720.0, (1.0 - np.cos(safe)) / (safe * safe))
    k = _hat(w)
    return np.eye(3) + a[:, None, None] * k + b[:, None, None] * (k @ k)


def log_batch(m, eps_cut):
    """Return ``(w, flag)``; ``flag[i] = 1`` marks angles within eps_cut of pi."""
    m = np.ascontiguousarray(m, dtype=np.float64)
    v = np.stack([m[:, 2, 1] - m[:, 1, 2], m[:, 0, 2] - m[:, 2, 0], m[:, 1, 0] - m[:, 0, 1]], axis=-1)
    s = 0.5 * np.linalg.norm(v, axis=-1)
    c = 0.5 * (np.trace(m, axis1=1, axis2=2) - 1.0)
    c = np.clip(c, -1.0, 1.0)
    th = np.arctan2(s, c)

    small = th < SMALL_ANGLE
    large = th > LARGE_ANGLE
    flag = (np.pi - th < eps_cut).astype(np.int8)

    safe_s = np.where(small | large, 1.0, s)
    fac = np.where(small, 0.5 * (1.0 + th * th / 6.0), th / (2.0 * safe_s))
    w = fac[:, None] * v

    if np.any(large):
        ml = m[large]
        cl = c[large]
        sym = 0.5 * (ml + np.swapaxes(ml, 1, 2))
        bmat = (sym - cl[:, None, None] * np.eye(3)) / (1.0 - cl)[:, None, None]
        diag = np.diagonal(bmat, axis1=1, axis2=2)
        col = np.argmax(diag, axis=1)
        idx = np.arange(len(ml))
        axis = bmat[idx, :, col] / np.sqrt(np.maximum(diag[idx, col], 1e-300))[:, None]
        axis /= np.linalg.norm(axis, axis=1, keepdims=True)
        sign = np.where(np.einsum("ni,ni->n", axis, v[large]) < 0.0, -1.0, 1.0)
        w[large] = (sign * th[large])[:, None] * axis
    return w, flag


def angle_batch(a, b):
    """Geodesic angle between paired rotations, ``atan2`` form of the trace formula."""
    rel = np.einsum("nji,njk->nik", a, b)
    v = np.stack([rel[:, 2, 1] - rel[:, 1, 2], rel[:, 0, 2] - rel[:, 2, 0], rel[:, 1, 0] - rel[:, 0, 1]], axis=-1)
    s = 0.5 * np.linalg.norm(v, axis=-1)
    c = np.clip(0.5 * (np.trace(rel, axis1=1, axis2=2) - 1.0), -1.0, 1.0)
    return np.arctan2(s, c)


def right_exp_batch(r, w, scale):
    """``r[i] @ exp(scale * hat(w[i]))`` for each i."""
    return np.asarray(r, dtype=np.float64) @ exp_batch(scale * np.asarray(w, dtype=np.float64))
