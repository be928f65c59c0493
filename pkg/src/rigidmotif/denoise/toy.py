"""Small rotation-invariant network with hand-written reverse mode.

Each frame ``k`` gets node features (token one-hot, time embedding, origin in
the local frame) and one message per other frame ``j`` built from invariant
pair features (distance RBF, ``(x_j - x_k) R_k^T``, ``R_j R_k^T``, tokens).
Messages are averaged, concatenated to the node features and mapped to
``(a, b, logits)``. ``a`` and ``b`` are invariant; the body rotation
velocity is ``R^T a / (1 - t)`` and the translation velocity ``b R / (1 - t)``.
"""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import flow_cont, flow_disc, so3
from ..flow_disc import MASK

CHECKPOINT_FORMAT = "rigidmotif-toy"
CHECKPOINT_VERSION = 1
N_FREQ = 4
RBF_MAX = 8.0


@dataclass(frozen=True)
class ToyConfig:
    n_classes: int
    hidden: tuple[int, int] = (128, 128)
    n_rbf: int = 8
    self_conditioning: bool = False
    loss_weighting: str = "endpoint"  # (1 - t)^2 weight on the SE(3) term, or "none"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ValueError("hidden must be two positive widths")
        if self.loss_weighting not in ("endpoint", "none"):
            raise ValueError("loss_weighting must be 'endpoint' or 'none'")

    @property
    def n_node(self) -> int:
        n = (self.n_classes + 1) + (1 + 2 * N_FREQ) + 4
        return n + (self.n_classes if self.self_conditioning else 0)

    @property
    def n_pair(self) -> int:
        return self.n_rbf + 3 + 9 + 2 * (self.n_classes + 1)

    @property
    def n_out(self) -> int:
        return 6 + self.n_classes


def silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s, s


def _silu_grad(x, s):
    return s * (1.0 + x * (1.0 - s))


@dataclass
class Batch:
    """Concatenated frames of several states plus their ordered frame pairs."""

    rots: np.ndarray  # (N, 3, 3)
    trans: np.ndarray  # (N, 3)
    tokens: np.ndarray  # (N,)
    t: np.ndarray  # (N,) time of the owning state
    state: np.ndarray  # (N,) owning state index
    recv: np.ndarray  # (P,)
    send: np.ndarray  # (P,)
    n_states: int
    sc_probs: np.ndarray | None = None  # (N, V) self-conditioning input

    @classmethod
    def from_states(cls, rots, trans, tokens, t) -> "Batch":
        """``rots`` ``(B, K, 3, 3)`` etc. with one ``t`` per state (or a scalar)."""
        rots = np.asarray(rots, dtype=float)
        B, K = rots.shape[:2]
        tt = np.broadcast_to(np.asarray(t, dtype=float), (B,))
        k, j = np.nonzero(~np.eye(K, dtype=bool))
        off = (np.arange(B) * K)[:, None]
        return cls(rots.reshape(-1, 3, 3), np.asarray(trans, dtype=float).reshape(-1, 3),
                   np.asarray(tokens).reshape(-1), np.repeat(tt, K), np.repeat(np.arange(B), K),
                   (off + k).reshape(-1), (off + j).reshape(-1), B)

    @classmethod
    def concat(cls, parts: list["Batch"]) -> "Batch":
        n0 = np.cumsum([0] + [len(p.tokens) for p in parts])
        s0 = np.cumsum([0] + [p.n_states for p in parts])
        sc = None
        if all(p.sc_probs is not None for p in parts):
            sc = np.concatenate([p.sc_probs for p in parts])
        return cls(
            np.concatenate([p.rots for p in parts]),
            np.concatenate([p.trans for p in parts]),
            np.concatenate([p.tokens for p in parts]),
            np.concatenate([p.t for p in parts]),
            np.concatenate([p.state + s for p, s in zip(parts, s0)]),
            np.concatenate([p.recv + n for p, n in zip(parts, n0)]),
            np.concatenate([p.send + n for p, n in zip(parts, n0)]),
            int(s0[-1]),
            sc,
        )


@dataclass
class Targets:
    rot_vel: np.ndarray  # (N, 3) body coefficients
    trans_vel: np.ndarray  # (N, 3)
    classes: np.ndarray  # (N,) clean class ids
    masked: np.ndarray  # (N,) bool


def _onehot(ids, n):
    out = np.zeros((len(ids), n))
    out[np.arange(len(ids)), ids] = 1.0
    return out


def node_features(cfg: ToyConfig, b: Batch) -> np.ndarray:
    f = np.arange(1, N_FREQ + 1)
    tt = b.t[:, None]
    temb = np.concatenate([tt, np.sin(2 * np.pi * f * tt), np.cos(2 * np.pi * f * tt)], axis=1)
    local = np.einsum("nj,nij->ni", -b.trans, b.rots)  # origin in the local frame: -x R^T
    parts = [_onehot(b.tokens, cfg.n_classes + 1), temb, local, np.linalg.norm(b.trans, axis=1, keepdims=True)]
    if cfg.self_conditioning:
        sc = b.sc_probs if b.sc_probs is not None else np.zeros((len(b.tokens), cfg.n_classes))
        parts.append(sc)
    return np.concatenate(parts, axis=1)


def pair_features(cfg: ToyConfig, b: Batch) -> np.ndarray:
    if len(b.recv) == 0:
        return np.zeros((0, cfg.n_pair))
    diff = b.trans[b.send] - b.trans[b.recv]
    d = np.linalg.norm(diff, axis=1, keepdims=True)
    mu = np.linspace(0.0, RBF_MAX, cfg.n_rbf)[None]
    width = RBF_MAX / max(cfg.n_rbf - 1, 1)
    rbf = np.exp(-0.5 * ((d - mu) / width) ** 2)
    rel_pos = np.einsum("pj,pij->pi", diff, b.rots[b.recv])
    rel_rot = (b.rots[b.send] @ np.swapaxes(b.rots[b.recv], 1, 2)).reshape(-1, 9)
    n = cfg.n_classes + 1
    return np.concatenate([rbf, rel_pos, rel_rot, _onehot(b.tokens[b.send], n), _onehot(b.tokens[b.recv], n)], axis=1)


PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4", "W5", "b5")


class ToyModel:
    def __init__(self, cfg: ToyConfig, params: dict | None = None, rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.params = params if params is not None else self.init_params(cfg, rng or np.random.default_rng(0))
        self._cache = None

    @property
    def n_classes(self) -> int:
        return self.cfg.n_classes

    @staticmethod
    def init_params(cfg: ToyConfig, rng: np.random.Generator) -> dict:
        h1, h2 = cfg.hidden
        shapes = {
            "W1": (cfg.n_pair, h1), "W2": (h1, h1),
            "W3": (cfg.n_node + h1, h2), "W4": (h2, h2), "W5": (h2, cfg.n_out),
        }
        p = {}
        for k, (fan_in, fan_out) in shapes.items():
            p[k] = rng.standard_normal((fan_in, fan_out)) * np.sqrt(1.0 / fan_in)
            p["b" + k[1:]] = np.zeros(fan_out)
        p["W5"] *= 0.1
        return p

    @classmethod
    def zeros(cls, cfg: ToyConfig) -> "ToyModel":
        m = cls(cfg, rng=np.random.default_rng(0))
        m.params = {k: np.zeros_like(v) for k, v in m.params.items()}
        return m

    # ------------------------------------------------------------------ forward

    def forward(self, b: Batch) -> np.ndarray:
        """Raw head outputs ``(N, 6 + V)``; caches activations for :meth:`backward`."""
        p = self.params
        xn = node_features(self.cfg, b)
        xp = pair_features(self.cfg, b)
        h1 = self.cfg.hidden[0]
        z1 = xp @ p["W1"] + p["b1"]
        a1, s1 = silu(z1)
        z2 = a1 @ p["W2"] + p["b2"]
        a2, s2 = silu(z2)
        deg = np.bincount(b.recv, minlength=len(b.tokens)).astype(float)
        agg = np.zeros((len(b.tokens), h1))
        np.add.at(agg, b.recv, a2)
        inv_deg = np.where(deg > 0, 1.0 / np.maximum(deg, 1.0), 0.0)
        agg *= inv_deg[:, None]
        u = np.concatenate([xn, agg], axis=1)
        z3 = u @ p["W3"] + p["b3"]
        a3, s3 = silu(z3)
        z4 = a3 @ p["W4"] + p["b4"]
        a4, s4 = silu(z4)
        out = a4 @ p["W5"] + p["b5"]
        self._cache = dict(b=b, xp=xp, z1=z1, s1=s1, a1=a1, z2=z2, s2=s2, inv_deg=inv_deg, u=u,
                           z3=z3, s3=s3, a3=a3, z4=z4, s4=s4, a4=a4, n_node=xn.shape[1])
        return out

    @staticmethod
    def split(out: np.ndarray, b: Batch):
        """Head outputs to body rotation velocity, translation velocity, logits."""
        s = (1.0 - b.t)[:, None]
        a = out[:, :3] / s
        bb = out[:, 3:6] / s
        rot_vel = np.einsum("nji,nj->ni", b.rots, a)
        trans_vel = np.einsum("nj,nji->ni", bb, b.rots)
        return rot_vel, trans_vel, out[:, 6:]

    def predict(self, b: Batch):
        return self.split(self.forward(b), b)

    def evaluate(self, state):
        """Denoiser interface; accepts a single state or a batch with leading axis."""
        rots = np.asarray(state.rots, dtype=float)
        single = rots.ndim == 3
        tokens = np.asarray(state.tokens)
        if single:
            rots, tokens = rots[None], tokens[None]
        trans = np.asarray(state.trans, dtype=float).reshape(rots.shape[:2] + (3,))
        b = Batch.from_states(rots, trans, tokens, state.t)
        if self.cfg.self_conditioning:
            b.sc_probs = getattr(state, "sc_probs", None)
            if b.sc_probs is not None:
                b.sc_probs = np.asarray(b.sc_probs).reshape(len(b.tokens), -1)
        rv, tv, logits = self.predict(b)
        probs = flow_disc.softmax(logits)
        shape = rots.shape[:2]
        rv, tv, probs = rv.reshape(shape + (3,)), tv.reshape(shape + (3,)), probs.reshape(shape + (-1,))
        if single:
            return rv[0], tv[0], probs[0]
        return rv, tv, probs

    # ------------------------------------------------------------------ loss

    def loss_weights(self, b: Batch) -> np.ndarray:
        if self.cfg.loss_weighting == "none":
            return np.ones(len(b.t))
        return (1.0 - b.t) ** 2

    def loss(self, b: Batch, tg: Targets, out: np.ndarray | None = None):
        """Mean over states of weighted SE(3) loss plus cross entropy on masked slots.

        Returns the loss and its gradient with respect to ``out``.
        """
        out = self.forward(b) if out is None else out
        s = (1.0 - b.t)[:, None]
        lam = self.loss_weights(b)[:, None]
        # invariant targets a* = R w*, b* = v* R^T
        a_star = np.einsum("nij,nj->ni", b.rots, tg.rot_vel)
        b_star = np.einsum("nj,nij->ni", tg.trans_vel, b.rots)
        ea = out[:, :3] / s - a_star
        eb = out[:, 3:6] / s - b_star
        logits = out[:, 6:]
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        m = tg.masked
        ce = -logp[np.flatnonzero(m), tg.classes[m] - 1]
        nb = b.n_states
        total = (np.sum(lam * ea ** 2) + np.sum(lam * eb ** 2) + np.sum(ce)) / nb
        g = np.zeros_like(out)
        g[:, :3] = 2.0 * lam * ea / s / nb
        g[:, 3:6] = 2.0 * lam * eb / s / nb
        sm = np.exp(logp)
        gl = np.where(m[:, None], sm, 0.0)
        gl[np.flatnonzero(m), tg.classes[m] - 1] -= 1.0
        g[:, 6:] = gl / nb
        return float(total), g

    # ------------------------------------------------------------------ backward

    def backward(self, g_out: np.ndarray) -> dict:
        c = self._cache
        if c is None:
            raise RuntimeError("backward needs a cached forward pass")
        p = self.params
        b: Batch = c["b"]
        grads = {}
        grads["W5"] = c["a4"].T @ g_out
        grads["b5"] = g_out.sum(axis=0)
        g = (g_out @ p["W5"].T) * _silu_grad(c["z4"], c["s4"])
        grads["W4"] = c["a3"].T @ g
        grads["b4"] = g.sum(axis=0)
        g = (g @ p["W4"].T) * _silu_grad(c["z3"], c["s3"])
        grads["W3"] = c["u"].T @ g
        grads["b3"] = g.sum(axis=0)
        g_u = g @ p["W3"].T
        g_agg = g_u[:, c["n_node"]:] * c["inv_deg"][:, None]
        g = g_agg[b.recv] * _silu_grad(c["z2"], c["s2"])
        grads["W2"] = c["a1"].T @ g
        grads["b2"] = g.sum(axis=0)
        g = (g @ p["W2"].T) * _silu_grad(c["z1"], c["s1"])
        grads["W1"] = c["xp"].T @ g
        grads["b1"] = g.sum(axis=0)
        return grads

    def loss_and_grad(self, b: Batch, tg: Targets):
        out = self.forward(b)
        val, g = self.loss(b, tg, out)
        return val, self.backward(g)

    # ------------------------------------------------------------------ checkpoint

    def save(self, path) -> None:
        from ..store import save_npz_deterministic

        meta = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "config": asdict(self.cfg),
                "params": {k: list(v.shape) for k, v in self.params.items()}}
        save_npz_deterministic(path, {"meta": np.array(json.dumps(meta, sort_keys=True)), **self.params})

    @classmethod
    def load(cls, path) -> "ToyModel":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise ValueError("not a toy-model checkpoint")
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            params = {k: np.array(z[k]) for k in PARAM_NAMES}
        conf = meta["config"]
        conf["hidden"] = tuple(conf["hidden"])
        cfg = ToyConfig(**conf)
        return cls(cfg, params)


# ---------------------------------------------------------------------- training


@dataclass
class TrainExample:
    tokens: np.ndarray  # (K,) class ids
    rots: np.ndarray  # (K, 3, 3)
    trans: np.ndarray  # (K, 3), centred
    syms: list  # per slot: list of 3x3 rotations


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-4
    batch_size: int = 32
    optimizer: str = "adam"  # or "sgd"
    augment_rotation: bool = True
    self_cond_prob: float = 0.5
    seed: int = 0


def centre(trans) -> np.ndarray:
    trans = np.asarray(trans, dtype=float)
    return trans - trans.mean(axis=0)


def make_batch(examples: list[TrainExample], rng: np.random.Generator, augment: bool = True,
               t: float | None = None) -> tuple[Batch, Targets]:
    parts, rv, tv, cls_, msk = [], [], [], [], []
    for ex in examples:
        tt = flow_cont.sample_time(rng) if t is None else t
        rots1, trans1 = ex.rots, ex.trans
        if augment:
            g = so3.sample_uniform_so3(rng)
            rots1, trans1 = rots1 @ g, trans1 @ g
        K = len(ex.tokens)
        rot0, trans0 = flow_cont.sample_prior(K, rng)
        smp = flow_cont.make_training_target(rot0, trans0, rots1, trans1, ex.syms, tt, rng)
        tok_t = flow_disc.noise_tokens(ex.tokens, tt, rng)
        parts.append(Batch.from_states(smp.rot_t[None], smp.trans_t[None], tok_t[None], tt))
        rv.append(smp.target_rot_vel)
        tv.append(smp.target_trans_vel)
        cls_.append(ex.tokens)
        msk.append(tok_t == MASK)
    b = Batch.concat(parts)
    return b, Targets(np.concatenate(rv), np.concatenate(tv), np.concatenate(cls_), np.concatenate(msk))


class Adam:
    def __init__(self, params: dict, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.n = 0

    def step(self, params: dict, grads: dict) -> None:
        self.n += 1
        c1 = 1.0 - self.b1 ** self.n
        c2 = 1.0 - self.b2 ** self.n
        for k in PARAM_NAMES:
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * grads[k]
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * grads[k] ** 2
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class SGD:
    def __init__(self, params: dict, lr: float):
        self.lr = lr

    def step(self, params: dict, grads: dict) -> None:
        for k in PARAM_NAMES:
            params[k] -= self.lr * grads[k]


def _self_condition(model: ToyModel, b: Batch, rng: np.random.Generator, prob: float) -> None:
    """With probability ``prob`` feed the model its own (detached) class estimate."""
    if not model.cfg.self_conditioning:
        return
    b.sc_probs = None
    if rng.random() < prob:
        _, _, logits = model.predict(b)
        b.sc_probs = flow_disc.softmax(logits)


@dataclass
class TrainResult:
    model: ToyModel
    losses: list[float] = field(default_factory=list)

    def curve_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,loss\n")
        for k, v in enumerate(self.losses):
            buf.write(f"{k},{v!r}\n")
        return buf.getvalue()


def train(model: ToyModel, data: list[TrainExample], tc: TrainConfig) -> TrainResult:
    """Deterministic given ``tc.seed``; one optimiser step per minibatch."""
    if not data:
        raise ValueError("empty training set")
    rng = np.random.default_rng(tc.seed)
    opt = Adam(model.params, tc.lr) if tc.optimizer == "adam" else SGD(model.params, tc.lr)
    res = TrainResult(model)
    n = len(data)
    for _ in range(tc.epochs):
        order = rng.permutation(n)
        for s in range(0, n, tc.batch_size):
            chunk = [data[i] for i in order[s:s + tc.batch_size]]
            b, tg = make_batch(chunk, rng, tc.augment_rotation)
            _self_condition(model, b, rng, tc.self_cond_prob)
            val, grads = model.loss_and_grad(b, tg)
            if not np.isfinite(val):
                raise FloatingPointError("training loss is not finite")
            opt.step(model.params, grads)
            res.losses.append(val)
    return res


def gradient_check(model: ToyModel, b: Batch, tg: Targets, n_coords: int = 1000, eps: float = 1e-3,
                   rng: np.random.Generator | None = None) -> float:
    """Max relative error of analytic vs central-difference gradients on random coordinates.

    Uses the fourth-order central stencil; with losses of O(100) the two-point
    stencil's rounding noise alone exceeds 1e-4 relative on small gradients.
    """
    rng = rng or np.random.default_rng(0)
    _, grads = model.loss_and_grad(b, tg)
    worst = 0.0
    names = list(PARAM_NAMES)
    sizes = np.array([model.params[k].size for k in names])
    picks = rng.choice(len(names), size=n_coords, p=sizes / sizes.sum())
    for k in picks:
        name = names[k]
        arr = model.params[name].reshape(-1)
        i = int(rng.integers(arr.size))
        old = arr[i]
        f = {}
        for step in (-2, -1, 1, 2):
            arr[i] = old + step * eps
            f[step], _ = model.loss(b, tg)
        arr[i] = old
        num = (8.0 * (f[1] - f[-1]) - (f[2] - f[-2])) / (12.0 * eps)
        ana = grads[name].reshape(-1)[i]
        scale = max(abs(num), abs(ana), 1e-6)
        worst = max(worst, abs(num - ana) / scale)
    return worst
