"""Joint sampling of frames and motif tokens with a pluggable denoiser."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import flow_cont, flow_disc, so3
from .denoise import FlowState
from .flow_disc import MASK, SamplingKnobs
from .flow_cont import RotSchedule


@dataclass
class SampleResult:
    rots: np.ndarray  # (B, K, 3, 3)
    trans: np.ndarray  # (B, K, 3)
    tokens: np.ndarray  # (B, K)
    trajectory: list[dict] = field(default_factory=list)


def initial_state(n: int, K: int, n_classes: int, rng: np.random.Generator, knobs: SamplingKnobs):
    rots = so3.sample_uniform_so3(rng, (n, K))
    trans = rng.standard_normal((n, K, 3))
    if knobs.uniform_prior:
        tokens = rng.integers(1, n_classes + 1, size=(n, K))
    else:
        tokens = np.full((n, K), MASK, dtype=np.int64)
    return rots, trans, tokens


def sample(denoiser, n: int, K: int, rng: np.random.Generator, steps: int = 100,
           knobs: SamplingKnobs = SamplingKnobs(), sched: RotSchedule = RotSchedule(),
           record: bool = False, discrete_only: bool = False, continuous_only_tokens=None) -> SampleResult:
    """Integrate ``n`` trajectories with ``K`` frames from ``t = 0`` to 1.

    Frames follow Euler steps of the predicted velocities; tokens follow the
    CTMC of :func:`flow_disc.generative_rates`. The last step forces every
    token out of ``MASK``. ``continuous_only_tokens`` fixes the tokens (no
    discrete flow), ``discrete_only`` freezes the frames.
    """
    ts = flow_cont.time_grid(steps)
    rots, trans, tokens = initial_state(n, K, denoiser.n_classes, rng, knobs)
    if continuous_only_tokens is not None:
        tokens = np.broadcast_to(np.asarray(continuous_only_tokens), (n, K)).copy()
    res = SampleResult(rots, trans, tokens)
    sc_probs = None
    for i in range(steps):
        t, h = float(ts[i]), float(ts[i + 1] - ts[i])
        state = FlowState(rots, trans, tokens, t, sc_probs)
        rv, tv, probs = denoiser.evaluate(state)
        if getattr(getattr(denoiser, "cfg", None), "self_conditioning", False):
            sc_probs = probs
        if continuous_only_tokens is None:
            rates = flow_disc.generative_rates(tokens, t, probs, knobs)
            final = i == steps - 1
            tokens = flow_disc.ctmc_step(tokens, rates, h, rng, final=final,
                                         probs=flow_disc.temper(probs, knobs.temp(t)) if final else None)
        if not discrete_only:
            rots, trans = flow_cont.integrate_step(rots, trans, rv, tv, t, h, sched)
        if record:
            res.trajectory.append({"step": i, "t": t, "masked": int(np.sum(tokens == MASK))})
    res.rots, res.trans, res.tokens = rots, trans, tokens
    return res


def motif_count_histogram(counts) -> tuple[np.ndarray, np.ndarray]:
    """Support and probabilities of the motifs-per-molecule histogram."""
    vals, freq = np.unique(np.asarray(counts), return_counts=True)
    return vals, freq / freq.sum()


def draw_motif_counts(counts, n: int, rng: np.random.Generator) -> np.ndarray:
    vals, p = motif_count_histogram(counts)
    return rng.choice(vals, size=n, p=p)
