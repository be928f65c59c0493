"""Discrete flow matching over motif tokens with a masking prior.

Token 0 is ``MASK``; classes are ``1..V``. Posteriors are ``(K, V)`` arrays
over the classes only. Rates are returned as ``(K, V + 1)`` arrays whose
column ``j`` is the jump intensity into state ``j`` (the own-state entry is 0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK = 0


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SamplingKnobs:
    temperature: float = 1.0
    temperature_hi: float | None = None  # linear schedule lo -> hi in t when set
    eta: float = 0.0
    uniform_prior: bool = False

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.temperature_hi is not None and self.temperature_hi < self.temperature:
            raise ValueError("temperature schedule needs lo <= hi")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")

    def temp(self, t: float) -> float:
        if self.temperature_hi is None:
            return self.temperature
        return self.temperature + t * (self.temperature_hi - self.temperature)

    @classmethod
    def parse_temperature(cls, text: str, **kw) -> "SamplingKnobs":
        """``"1.0"`` or ``"1.0:1.5"``."""
        lo, _, hi = text.partition(":")
        return cls(float(lo), float(hi) if hi else None, **kw)


def conditional_path_sample(m1: int, t: float, rng: np.random.Generator, size=None):
    """``m1`` with probability ``t``, otherwise ``MASK``."""
    if m1 == MASK:
        raise ValueError("m1 must not be MASK")
    u = rng.random(size)
    return np.where(u < t, m1, MASK) if size is not None else (m1 if u < t else MASK)


def conditional_rate(j: int, l: int, m1: int, t: float) -> float:
    if not t < 1.0:
        raise ValueError("t must be < 1")
    return 1.0 / (1.0 - t) if (j == MASK and l == m1) else 0.0


def conditional_rate_matrix(m1: int, n_states: int, t: float) -> np.ndarray:
    q = np.zeros((n_states, n_states))
    q[MASK, m1] = conditional_rate(MASK, m1, m1, t)
    return q


def masking_path(m1: int, n_states: int, t: float) -> np.ndarray:
    p = np.zeros(n_states)
    p[MASK] += 1.0 - t
    p[m1] += t
    return p


def uniform_path(m1: int, n_classes: int, t: float) -> np.ndarray:
    """Ablation path ``(1 - t) uniform + t delta_m1`` over classes (index = class - 1)."""
    p = np.full(n_classes, (1.0 - t) / n_classes)
    p[m1 - 1] += t
    return p


def uniform_conditional_rate_matrix(m1: int, n_classes: int, t: float) -> np.ndarray:
    """Rates ``j -> m1`` of ``1 / (1 - t)`` for every ``j != m1`` (class indices)."""
    q = np.zeros((n_classes, n_classes))
    q[:, m1 - 1] = 1.0 / (1.0 - t)
    q[m1 - 1, m1 - 1] = 0.0
    return q


def kolmogorov_residual(path, rates, t: float, dt: float = 1e-5) -> np.ndarray:
    """``d/dt p_t - (inflow - outflow)`` per state, central finite differences.

    ``path(t)`` returns the distribution, ``rates(t)`` the off-diagonal rate
    matrix ``Q[j, k]`` for jumps ``j -> k``.
    """
    lo = max(t - dt, 0.0)
    hi = t + dt
    dp = (path(hi) - path(lo)) / (hi - lo)
    p = path(t)
    q = np.array(rates(t), dtype=float)
    np.fill_diagonal(q, 0.0)
    rhs = p @ q - p * q.sum(axis=1)
    return dp - rhs


def temper(probs, temperature: float) -> np.ndarray:
    """Divide log-probabilities by ``temperature`` and renormalise per row."""
    p = np.asarray(probs, dtype=float)
    with np.errstate(divide="ignore"):
        logp = np.log(p) / temperature
    logp -= logp.max(axis=-1, keepdims=True)
    out = np.exp(logp)
    return out / out.sum(axis=-1, keepdims=True)


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    z = np.asarray(logits, dtype=float) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def generative_rates(tokens, t: float, probs, knobs: SamplingKnobs = SamplingKnobs()) -> np.ndarray:
    """Marginal jump rates per token.

    Masked tokens move to class ``l`` at ``p~(l) (1 + eta t) / (1 - t)``;
    unmasked tokens return to ``MASK`` at rate ``eta``. With the uniform
    prior flag, token ``j`` moves to ``l != j`` at ``p~(l | j) / (1 - t)``.
    Leading batch axes are allowed: tokens ``(..., K)``, probs ``(..., K, V)``.
    """
    if not t < 1.0:
        raise ValueError("t must be < 1")
    tokens = np.asarray(tokens)
    probs = np.asarray(probs, dtype=float)
    if probs.ndim < 1 or probs.shape[:-1] != tokens.shape:
        raise ShapeMismatch(f"posterior {probs.shape} for tokens {tokens.shape}")
    V = probs.shape[-1]
    pt = temper(probs, knobs.temp(t))
    rates = np.zeros(tokens.shape + (V + 1,))
    if knobs.uniform_prior:
        rates[..., 1:] = pt / (1.0 - t)
        np.put_along_axis(rates, tokens[..., None], 0.0, axis=-1)
        return rates
    masked = tokens == MASK
    rates[..., 1:] = np.where(masked[..., None], pt * (1.0 + knobs.eta * t) / (1.0 - t), 0.0)
    rates[..., MASK] = np.where(masked, 0.0, knobs.eta)
    return rates


def _draw(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index of the bin of ``u`` in rows of cumulative weights."""
    return np.minimum((cum <= u[:, None]).sum(axis=1), cum.shape[1] - 1)


def ctmc_step(tokens, rates, h: float, rng: np.random.Generator, final: bool = False,
              probs=None) -> np.ndarray:
    """Euler jump step; jump probabilities ``h * rate`` are clamped.

    When the total outflow exceeds ``1 / h`` the row is renormalised so the
    token surely jumps. ``final=True`` then replaces any remaining ``MASK``
    by a draw from ``probs`` (the tempered posterior, shape ``(..., V)``).
    """
    tokens = np.array(tokens)
    shape = tokens.shape
    tok = tokens.reshape(-1)
    rates = np.asarray(rates, dtype=float).reshape(len(tok), -1)
    jump = np.clip(h * rates, 0.0, None)
    jump[np.arange(len(tok)), tok] = 0.0
    out = jump.sum(axis=1)
    over = out > 1.0
    jump[over] /= out[over, None]
    out = np.minimum(out, 1.0)
    u = rng.random(len(tok))
    moves = u < out
    if moves.any():
        tok[moves] = _draw(np.cumsum(jump[moves], axis=1), u[moves])
    if final:
        left = np.flatnonzero(tok == MASK)
        if len(left):
            if probs is None:
                raise ValueError("final step needs the posterior to unmask")
            p = np.asarray(probs, dtype=float).reshape(len(tok), -1)[left]
            tok[left] = 1 + _draw(np.cumsum(p, axis=1), rng.random(len(left)) * p.sum(axis=1))
    return tok.reshape(shape)


def dfm_loss(probs, m1, masked) -> float:
    """Cross entropy ``-sum log p(m1)`` over masked slots (``m1`` in class ids)."""
    probs = np.asarray(probs, dtype=float)
    m1 = np.asarray(m1)
    masked = np.asarray(masked, dtype=bool)
    if probs.ndim != 2 or len(probs) != len(m1) or len(masked) != len(m1):
        raise ShapeMismatch("posterior, targets and mask disagree")
    if not masked.any():
        return 0.0
    p = probs[np.flatnonzero(masked), m1[masked] - 1]
    with np.errstate(divide="ignore"):
        return float(-np.sum(np.log(p)))


def noise_tokens(m1, t: float, rng: np.random.Generator) -> np.ndarray:
    """Sample the masking path independently per slot."""
    m1 = np.asarray(m1)
    return np.where(rng.random(len(m1)) < t, m1, MASK)
