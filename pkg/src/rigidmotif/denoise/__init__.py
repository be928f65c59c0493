"""Denoisers that close the sampling loop: exact oracles and a small trainable model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np


@dataclass
class FlowState:
    """Noisy molecule at time ``t``; arrays may carry a leading batch axis."""

    rots: np.ndarray  # (..., K, 3, 3)
    trans: np.ndarray  # (..., K, 3)
    tokens: np.ndarray  # (..., K)
    t: float
    sc_probs: np.ndarray | None = None  # self-conditioning input, when used

    def __post_init__(self):
        K = self.tokens.shape[-1]
        if self.rots.shape[-3:] != (K, 3, 3) or self.trans.shape[-2:] != (K, 3):
            raise ValueError("frame and token counts differ")

    @property
    def K(self) -> int:
        return self.tokens.shape[-1]


class Denoiser(Protocol):
    n_classes: int

    def evaluate(self, state: FlowState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Body rotation velocities, translation velocities, class posteriors."""
        ...


from .oracle import OracleDenoiser, ZeroSupport, oracle_bayes_discrete, oracle_kernel_continuous  # noqa: E402
from .toy import ToyConfig, ToyModel  # noqa: E402

__all__ = [
    "FlowState",
    "Denoiser",
    "OracleDenoiser",
    "ZeroSupport",
    "oracle_bayes_discrete",
    "oracle_kernel_continuous",
    "ToyConfig",
    "ToyModel",
]
