"""Motif vocabulary: exemplar poses, automorphisms, symmetry groups, frames."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import so3
from .fragment import FragmentedMolecule, is_collinear
from .molgraph import Bond, CanonicalKey, MolecularGraph, atom_labels, canonical_form, search_leaves

log = logging.getLogger(__name__)

MASK = 0
VOCAB_FORMAT = "rigidmotif-vocabulary"
VOCAB_VERSION = 1
RMSD_TOL = 0.25
SYM_TOL = 1e-3


class Degenerate(ValueError):
    """Kabsch input does not span a plane."""


class NotAGroup(ValueError):
    pass


class NoValidAutomorphism(ValueError):
    pass


def kabsch(p, q) -> np.ndarray:
    """Proper rotation ``R`` minimising ``sum |p_a R - q_a|^2`` for centred ``p``, ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    if len(p) < 3 or is_collinear(p):
        raise Degenerate("point set is collinear")
    u, _, vt = np.linalg.svd(p.T @ q)
    d = 1.0 if np.linalg.det(u @ vt) > 0 else -1.0
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rmsd(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=-1))))


def _leaves(labels, adj):
    best = None
    leaves = []
    for ser, col in search_leaves(labels, adj):
        leaves.append((ser, col))
        if best is None or ser < best:
            best = ser
    return best, [col for ser, col in leaves if ser == best]


def enumerate_automorphisms(g: MolecularGraph) -> list[tuple[int, ...]]:
    """All label- and bond-order-preserving permutations, lexicographically sorted.

    ``perm[v]`` is the image of atom ``v``.
    """
    labels = atom_labels(g)
    adj = g.adjacency()
    best, cols = _leaves(labels, adj)
    if not cols:
        return [()]
    base = cols[0]
    inv0 = [0] * len(base)
    for v, c in enumerate(base):
        inv0[c] = v
    perms = {tuple(inv0[col[v]] for v in range(len(col))) for col in cols}
    return sorted(perms)


def symmetry_group(pose, perms, rmsd_tol: float = RMSD_TOL, dedup_tol: float = SYM_TOL,
                   closure_tol: float = SYM_TOL) -> list[np.ndarray]:
    """Rotations ``R`` with ``pose[perm] @ R ~ pose`` for geometric automorphisms.

    Identity comes first. Raises :class:`NotAGroup` when the accepted set is
    not closed under composition within ``closure_tol``.
    """
    pose = np.asarray(pose, dtype=float)
    rots: list[np.ndarray] = [np.eye(3)]
    for perm in perms:
        moved = pose[list(perm)]
        r = kabsch(moved, pose)
        if rmsd(moved @ r, pose) > rmsd_tol:
            continue
        if min(so3.geodesic_dist(r, s) for s in rots) > dedup_tol:
            rots.append(r)
    stack = np.stack(rots)
    for a in rots:
        prods = a @ stack
        for p in prods:
            if np.min(so3.geodesic_dist(p, stack)) > closure_tol:
                raise NotAGroup(f"{len(rots)} symmetry rotations are not closed (tolerance {closure_tol:g} rad)")
    return rots


@dataclass
class MotifDescriptor:
    key: CanonicalKey
    pose: np.ndarray
    types: list[str]
    bonds: list[Bond]
    sym: list[np.ndarray]
    count: int = 0

    @property
    def n_atoms(self) -> int:
        return len(self.types)

    def graph(self) -> MolecularGraph:
        from .molgraph import DUMMY, Atom
        atoms = [Atom(t, p, is_dummy=(t == DUMMY)) for t, p in zip(self.types, self.pose)]
        return MolecularGraph(atoms, list(self.bonds))

    @cached_property
    def _canon(self):
        g = self.graph()
        labels = atom_labels(g)
        adj = g.adjacency()
        ser, col = canonical_form(labels, adj)
        return ser, col

    @cached_property
    def automorphisms(self) -> list[tuple[int, ...]]:
        return enumerate_automorphisms(self.graph())

    def real_mask(self) -> np.ndarray:
        from .molgraph import DUMMY
        return np.array([t != DUMMY for t in self.types])


@dataclass
class FrameAssignment:
    frame: so3.RigidFrame
    correspondence: tuple[int, ...]  # descriptor atom a -> instance point index
    residual: float


def _instance_points(fm: FragmentedMolecule, k: int) -> tuple[np.ndarray, MolecularGraph]:
    inst = fm.motifs[k]
    return inst.points(fm.source), inst.graph(fm.source)


def assign_frame(desc: MotifDescriptor, coords, graph: MolecularGraph, rmsd_tol: float = RMSD_TOL) -> FrameAssignment:
    """Frame placing ``desc.pose`` onto an instance (coords incl. dummies).

    Automorphisms are tried in lexicographic order; the first with residual
    within ``rmsd_tol`` wins.
    """
    coords = np.asarray(coords, dtype=float)
    ser_d, col_d = desc._canon
    ser_i, col_i = canonical_form(atom_labels(graph), graph.adjacency())
    if ser_d != ser_i:
        raise NoValidAutomorphism("instance graph is not isomorphic to the descriptor")
    inv_i = [0] * len(col_i)
    for v, c in enumerate(col_i):
        inv_i[c] = v
    phi = [inv_i[col_d[a]] for a in range(len(col_d))]
    x = coords.mean(axis=0)
    y = coords - x
    best = None
    for perm in desc.automorphisms:
        corr = tuple(phi[perm[a]] for a in range(len(perm)))
        y_pi = y[list(corr)]
        r = kabsch(desc.pose, y_pi)
        res = rmsd(desc.pose @ r, y_pi)
        if res <= rmsd_tol:
            return FrameAssignment(so3.RigidFrame(r, x), corr, res)
        if best is None or res < best:
            best = res
    raise NoValidAutomorphism(f"best residual {best:.3f} A exceeds {rmsd_tol} A")


def reconstruct_points(desc: MotifDescriptor, frame: so3.RigidFrame, sym: np.ndarray | None = None) -> np.ndarray:
    """``P S R + 1 x^T`` (all points incl. dummies)."""
    p = desc.pose if sym is None else desc.pose @ sym
    return p @ frame.rot + frame.trans


@dataclass
class Vocabulary:
    entries: list[MotifDescriptor] = field(default_factory=list)
    mask_index: int = MASK

    def __len__(self):
        return len(self.entries)

    @property
    def n_tokens(self) -> int:
        """Vocabulary size including the mask token."""
        return len(self.entries) + 1

    @cached_property
    def _index(self) -> dict[CanonicalKey, int]:
        return {d.key: k + 1 for k, d in enumerate(self.entries)}

    def token(self, key: CanonicalKey) -> int:
        return self._index[key]

    def descriptor(self, token: int) -> MotifDescriptor:
        if token == MASK:
            raise KeyError("mask token has no descriptor")
        return self.entries[token - 1]

    def sym(self, token: int) -> list[np.ndarray]:
        if token == MASK:
            return [np.eye(3)]
        return self.descriptor(token).sym

    def counts(self) -> np.ndarray:
        return np.array([d.count for d in self.entries])

    # -------------------------------------------------------------- file format

    def to_json(self) -> str:
        doc = {
            "format": VOCAB_FORMAT,
            "version": VOCAB_VERSION,
            "mask_index": self.mask_index,
            "entries": [
                {
                    "key": d.key.hex(),
                    "count": d.count,
                    "types": d.types,
                    "pose": d.pose.tolist(),
                    "bonds": [[b.i, b.j, b.order] for b in d.bonds],
                    "sym": [s.tolist() for s in d.sym],
                }
                for d in self.entries
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        doc = json.loads(text)
        if doc.get("format") != VOCAB_FORMAT:
            raise ValueError("not a vocabulary file")
        if doc.get("version") != VOCAB_VERSION:
            raise ValueError(f"unsupported vocabulary version {doc.get('version')}")
        entries = [
            MotifDescriptor(
                key=CanonicalKey.fromhex(e["key"]),
                pose=np.array(e["pose"], dtype=float),
                types=list(e["types"]),
                bonds=[Bond(i, j, o) for i, j, o in e["bonds"]],
                sym=[np.array(s, dtype=float) for s in e["sym"]],
                count=int(e["count"]),
            )
            for e in doc["entries"]
        ]
        return cls(entries, doc.get("mask_index", MASK))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass
class MoleculeFrames:
    """Per-molecule motif tokens and frames (``None`` entries mean skipped)."""

    title: str
    tokens: np.ndarray
    rots: np.ndarray
    trans: np.ndarray
    correspondences: list[tuple[int, ...]]


@dataclass
class VocabularyBuild:
    vocab: Vocabulary
    frames: list[MoleculeFrames | None]
    compression: dict

    @property
    def max_sym(self) -> int:
        return max((len(d.sym) for d in self.vocab.entries), default=1)


def compression_stats(dataset: list[FragmentedMolecule]) -> dict:
    """Representation-size ratios: atoms per molecule over motifs per molecule."""
    ok = [fm for fm in dataset if fm.skipped is None]
    if not ok:
        return {"all_atom": float("nan"), "heavy_atom": float("nan"), "n_molecules": 0}
    atoms = np.array([len(fm.source.atoms) for fm in ok], dtype=float)
    heavy = np.array([sum(fm.source.is_heavy(i) for i in range(len(fm.source.atoms))) for fm in ok], dtype=float)
    motifs = np.array([fm.n_motifs for fm in ok], dtype=float)
    return {
        "all_atom": float(atoms.mean() / motifs.mean()),
        "heavy_atom": float(heavy.mean() / motifs.mean()),
        "all_atom_per_molecule": float(np.mean(atoms / motifs)),
        "heavy_atom_per_molecule": float(np.mean(heavy / motifs)),
        "mean_atoms": float(atoms.mean()),
        "mean_heavy_atoms": float(heavy.mean()),
        "mean_motifs": float(motifs.mean()),
        "n_molecules": len(ok),
    }


def build_vocabulary(dataset: list[FragmentedMolecule], rmsd_tol: float = RMSD_TOL,
                     closure_tol: float = SYM_TOL) -> VocabularyBuild:
    """Elect exemplars by first occurrence and assign a frame to every instance."""
    vocab = Vocabulary()
    index: dict[CanonicalKey, int] = {}
    frames: list[MoleculeFrames | None] = []
    for fm in dataset:
        if fm.skipped is not None:
            frames.append(None)
            continue
        for k, inst in enumerate(fm.motifs):
            if inst.key in index:
                continue
            pts, g = _instance_points(fm, k)
            pose = pts - pts.mean(axis=0)
            perms = enumerate_automorphisms(g)
            sym = symmetry_group(pose, perms, rmsd_tol, closure_tol=closure_tol)
            desc = MotifDescriptor(inst.key, pose, atom_labels(g), list(g.bonds), sym)
            vocab.entries.append(desc)
            index[inst.key] = len(vocab.entries)
        tokens, rots, trans, corr = [], [], [], []
        try:
            for k, inst in enumerate(fm.motifs):
                desc = vocab.entries[index[inst.key] - 1]
                pts, g = _instance_points(fm, k)
                fa = assign_frame(desc, pts, g, rmsd_tol)
                tokens.append(index[inst.key])
                rots.append(fa.frame.rot)
                trans.append(fa.frame.trans)
                corr.append(fa.correspondence)
        except NoValidAutomorphism as exc:
            log.warning("skipping %r: %s", fm.source.title, exc)
            frames.append(None)
            continue
        for inst in fm.motifs:
            vocab.entries[index[inst.key] - 1].count += 1
        frames.append(MoleculeFrames(fm.source.title, np.array(tokens), np.stack(rots), np.stack(trans), corr))
    vocab.__dict__.pop("_index", None)
    return VocabularyBuild(vocab, frames, compression_stats(dataset))
