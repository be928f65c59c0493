"""Time the compiled SO(3) kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 100000] [--repeat 5]

Prints one row per kernel: best-of-``repeat`` wall time for each backend,
the speedup, and the max absolute difference between the two outputs.
"""
import argparse
import sys
import timeit

import numpy as np

from rigidmotif._core import _so3_py as py
from rigidmotif.so3 import EPS_CUT, sample_uniform_so3

try:
    from rigidmotif._core import _so3_ext as ext
except ImportError:
    ext = None


def cases(n: int, rng: np.random.Generator):
    w = rng.normal(size=(n, 3))
    w *= (rng.uniform(0, np.pi - 0.1, size=n) / np.linalg.norm(w, axis=1))[:, None]
    a = sample_uniform_so3(rng, n)
    b = sample_uniform_so3(rng, n)
    m = py.exp_batch(w)
    return {
        "exp_batch": lambda k: k.exp_batch(w),
        "log_batch": lambda k: k.log_batch(m, EPS_CUT),
        "angle_batch": lambda k: k.angle_batch(a, b),
        "right_exp_batch": lambda k: k.right_exp_batch(a, w, 0.01),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if ext is None:
        print("compiled extension not available; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<16} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8} {'max diff':>10}")
    for name, fn in cases(args.n, rng).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
        t_ext = min(timeit.repeat(lambda: fn(ext), number=1, repeat=args.repeat))
        ra, rb = fn(py), fn(ext)
        if not isinstance(ra, tuple):
            ra, rb = (ra,), (rb,)
        diff = max(float(np.max(np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))))
                   for x, y in zip(ra, rb))
        print(f"{name:<16} {1e3 * t_py:>10.2f} {1e3 * t_ext:>10.2f} {t_py / t_ext:>7.1f}x {diff:>10.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
