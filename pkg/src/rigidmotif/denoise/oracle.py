"""Exact posterior denoisers over finite datasets."""
from __future__ import annotations

import numpy as np

from .. import so3
from ..flow_disc import MASK


class ZeroSupport(ValueError):
    """The observed tokens are impossible under every datum."""


def _batch(x, tail: int):
    x = np.asarray(x)
    single = x.ndim == tail
    return (x[None] if single else x), single


MISMATCH_LOGP = -30.0


def mismatch_counts(data_tokens, tokens) -> np.ndarray:
    """Unmasked slots of each state disagreeing with each datum, shape ``(B, D)``."""
    data = np.asarray(data_tokens)
    tok, _ = _batch(tokens, 1)
    bad = (tok[:, None, :] != MASK) & (tok[:, None, :] != data[None])
    return bad.sum(axis=2)


def discrete_log_weights(data_tokens, tokens, soft: bool = False) -> np.ndarray:
    """``log P(m_t | datum)`` up to a datum-free constant; ``-inf`` on mismatch.

    Masked slots contribute ``1 - t`` and matching unmasked slots ``t`` for
    every datum alike, so only compatibility matters. ``soft`` scores each
    mismatching slot as ``MISMATCH_LOGP`` instead, which keeps states that left
    the support (two slots unmasked in one Euler step) usable.
    """
    bad = mismatch_counts(data_tokens, tokens)
    if soft:
        return MISMATCH_LOGP * bad
    with np.errstate(divide="ignore"):
        return np.log((bad == 0).astype(float))


def _onehot_data(data_tokens, n_classes: int) -> np.ndarray:
    data = np.asarray(data_tokens)
    onehot = np.zeros(data.shape + (n_classes,))
    np.put_along_axis(onehot, (data - 1)[..., None], 1.0, axis=-1)
    return onehot


def oracle_bayes_discrete(data_tokens, tokens, n_classes: int, weights=None) -> np.ndarray:
    """Exact per-slot posterior ``p(m_1 | m_t)`` over a finite token dataset.

    ``data_tokens`` is ``(D, K)`` with class ids ``1..n_classes``; ``tokens``
    is ``(K,)`` or ``(B, K)``. Returns ``(..., K, n_classes)``.
    """
    _, single = _batch(tokens, 1)
    try:
        w = _normalise(discrete_log_weights(data_tokens, tokens), weights)
    except ZeroSupport:
        raise ZeroSupport("observed tokens match no datum") from None
    post = np.einsum("bd,dkv->bkv", w, _onehot_data(data_tokens, n_classes))
    return post[0] if single else post


def log_rotation_kernel(omega, t: float) -> np.ndarray:
    """Log density, relative to Haar, of ``R_t`` at angle ``omega`` from ``R_1``.

    ``R_1^T R_t`` has a uniform axis and angle ``(1 - t) theta`` with ``theta``
    Haar-distributed, so the ratio is
    ``(1 - cos(omega / (1 - t))) / ((1 - t) (1 - cos omega))`` on
    ``omega < (1 - t) pi``, and 0 beyond.
    """
    omega = np.asarray(omega, dtype=float)
    s = 1.0 - t
    with np.errstate(divide="ignore", invalid="ignore"):
        num = 2.0 * np.log(np.abs(np.sin(0.5 * omega / s)))
        den = 2.0 * np.log(np.abs(np.sin(0.5 * omega)))
        out = num - den - np.log(s)
    small = omega < 1e-8
    out = np.where(small, -3.0 * np.log(s), out)
    return np.where(omega >= s * np.pi, -np.inf, out)


def continuous_log_weights(data_rots, data_trans, rots, trans, t: float, sigma: float = 0.0) -> np.ndarray:
    """``log p_t(frames | datum)`` summed over slots, shape ``(B, D)``."""
    R, _ = _batch(rots, 3)
    X, _ = _batch(trans, 2)
    R1 = np.asarray(data_rots, dtype=float)
    X1 = np.asarray(data_trans, dtype=float)
    var = (1.0 - t) ** 2 + sigma ** 2
    d2 = np.sum((X[:, None] - t * X1[None]) ** 2, axis=-1)  # (B, D, K)
    log_gauss = -0.5 * d2 / var - 1.5 * np.log(2 * np.pi * var)
    omega = so3.geodesic_dist(R[:, None], R1[None])
    if np.ndim(omega) == 0:
        omega = np.full(d2.shape, omega)
    log_rot = log_rotation_kernel(omega, t)
    if np.any(np.all(np.isinf(log_rot.sum(-1)), axis=1)):
        # off-support state (numerical drift near the band edge): use the band edge
        clipped = np.minimum(omega, (1.0 - t) * (np.pi - 1e-3))
        fix = np.all(np.isinf(log_rot.sum(-1)), axis=1)
        log_rot[fix] = log_rotation_kernel(clipped[fix], t)
    return np.sum(log_gauss + log_rot, axis=-1)


def _velocities(data_rots, data_trans, R, X, t, w):
    s = 1.0 - t
    rel = np.swapaxes(R[:, None], -1, -2) @ np.asarray(data_rots)[None]  # (B, D, K, 3, 3)
    logs = so3.log_so3(rel.reshape(-1, 3, 3), eps_cut=0.0).reshape(rel.shape[:-2] + (3,))
    rot_vel = np.einsum("bd,bdkc->bkc", w, logs) / s
    trans_vel = (np.einsum("bd,dkc->bkc", w, np.asarray(data_trans)) - X) / s
    return rot_vel, trans_vel


def _normalise(logw, weights=None):
    if weights is not None:
        with np.errstate(divide="ignore"):
            logw = logw + np.log(np.asarray(weights, dtype=float))[None]
    top = logw.max(axis=1, keepdims=True)
    if np.any(~np.isfinite(top)):
        raise ZeroSupport("state has zero density under every datum")
    w = np.exp(logw - top)
    return w / w.sum(axis=1, keepdims=True)


def oracle_kernel_continuous(data_rots, data_trans, rots, trans, t: float, sigma: float = 0.0,
                             weights=None):
    """Posterior-weighted average of the conditional fields over a frame dataset.

    ``data_rots`` ``(D, K, 3, 3)``, ``data_trans`` ``(D, K, 3)``; the state may
    carry a batch axis. Translation weights are Gaussian with variance
    ``(1 - t)^2 + sigma^2``; rotation weights use :func:`log_rotation_kernel`.
    """
    R, single = _batch(rots, 3)
    X, _ = _batch(trans, 2)
    logw = continuous_log_weights(data_rots, data_trans, R, X, t, sigma)
    w = _normalise(logw, weights)
    rv, tv = _velocities(data_rots, data_trans, R, X, t, w)
    return (rv[0], tv[0]) if single else (rv, tv)


class OracleDenoiser:
    """Joint Bayes oracle: one posterior over data drives both modalities."""

    def __init__(self, data_tokens, data_rots, data_trans, n_classes: int, sigma: float = 0.0,
                 weights=None, discrete_only: bool = False, strict: bool = False):
        self.data_tokens = np.asarray(data_tokens)
        self.data_rots = np.asarray(data_rots, dtype=float)
        self.data_trans = np.asarray(data_trans, dtype=float)
        if len(self.data_tokens) == 0:
            raise ValueError("oracle needs a nonempty dataset")
        self.n_classes = n_classes
        self.sigma = sigma
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        self.discrete_only = discrete_only
        self.strict = strict

    @property
    def K(self) -> int:
        return self.data_tokens.shape[1]

    def evaluate(self, state):
        R, single = _batch(state.rots, 3)
        X, _ = _batch(state.trans, 2)
        logw = discrete_log_weights(self.data_tokens, state.tokens, soft=not self.strict)
        if not self.discrete_only:
            logw = logw + continuous_log_weights(self.data_rots, self.data_trans, R, X, state.t, self.sigma)
        w = _normalise(logw, self.weights)
        probs = np.einsum("bd,dkv->bkv", w, _onehot_data(self.data_tokens, self.n_classes))
        if self.discrete_only:
            rv = np.zeros(X.shape)
            tv = np.zeros(X.shape)
        else:
            rv, tv = _velocities(self.data_rots, self.data_trans, R, X, state.t, w)
        if single:
            return rv[0], tv[0], probs[0]
        return rv, tv, probs
