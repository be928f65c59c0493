"""Rigid-motif decomposition: bond cutting, frequency pruning, dummy atoms.

Relaxation ladder used when pruning rare motifs (``level`` on an instance):

0. configured strategy (``PlanarRings`` preserves planar ring systems)
1. fused planar systems are split ring by ring; atoms shared by two rings
   stay with the ring claimed first (larger rings first)
2. ``NoRings`` rules: every single heavy-heavy bond is cut
3. every heavy-heavy bond is cut, leaving heavy atoms with their hydrogens
"""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .molgraph import (
    DUMMY,
    SINGLE,
    Atom,
    Bond,
    CanonicalKey,
    MolecularGraph,
    aromatise,
    canonical_key,
    is_planar_ring_system,
    perceive_rings,
)

log = logging.getLogger(__name__)

MAX_LEVEL = 3
COLLINEAR_RTOL = 1e-6


class Strategy(str, Enum):
    NO_RINGS = "NoRings"
    PLANAR_RINGS = "PlanarRings"


class FrameUnlockable(ValueError):
    """No neighbour can lock the frame of a degenerate motif."""


class PruningDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class FragmentationConfig:
    alpha: float = 0.1
    strategy: Strategy = Strategy.PLANAR_RINGS
    planarity_tol: float = 0.1
    dummy_bond_len: float = 1.0
    alpha_basis: str = "records"  # or "molecules"
    collinear_tol: float = 1e-3  # s2/s1 below this counts as collinear when locking frames
    aromaticity: bool = True  # relabel Kekulé-alternating rings as aromatic before cutting

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.dummy_bond_len <= 0:
            raise ValueError("dummy_bond_len must be > 0")
        if self.alpha_basis not in ("records", "molecules"):
            raise ValueError("alpha_basis must be 'records' or 'molecules'")
        object.__setattr__(self, "strategy", Strategy(self.strategy))


@dataclass
class MotifInstance:
    atom_indices: list[int]
    dummy_positions: list[np.ndarray] = field(default_factory=list)
    dummy_attach: list[int] = field(default_factory=list)  # parent atom index per dummy
    key: CanonicalKey | None = None
    level: int = 0

    @property
    def size(self) -> int:
        return len(self.atom_indices) + len(self.dummy_positions)

    def points(self, mol: MolecularGraph) -> np.ndarray:
        pts = mol.coords[self.atom_indices]
        if self.dummy_positions:
            pts = np.vstack([pts, np.asarray(self.dummy_positions)])
        return pts

    def graph(self, mol: MolecularGraph) -> MolecularGraph:
        """Motif subgraph with dummies appended and bonded to their attachment atoms."""
        sub = mol.subgraph(self.atom_indices)
        local = {a: k for k, a in enumerate(self.atom_indices)}
        n = len(sub.atoms)
        for d, (pos, att) in enumerate(zip(self.dummy_positions, self.dummy_attach)):
            sub.atoms.append(Atom(DUMMY, np.asarray(pos, dtype=float), is_dummy=True))
            sub.bonds.append(Bond(local[att], n + d, SINGLE))
        return sub


@dataclass
class FragmentedMolecule:
    source: MolecularGraph
    motifs: list[MotifInstance]
    cut_bonds: list[Bond]
    skipped: str | None = None  # reason, when a motif frame could not be locked
    kekule: dict | None = None  # bond key -> order as read, before aromatic relabelling

    @property
    def n_motifs(self) -> int:
        return len(self.motifs)


class Fragmenter:
    """Applies the cutting rules; caches planarity per ring-system class."""

    def __init__(self, cfg: FragmentationConfig | None = None):
        self.cfg = cfg or FragmentationConfig()
        self.planarity: dict[CanonicalKey, bool] = {}

    def _planar(self, g: MolecularGraph, atoms) -> bool:
        key = canonical_key(g.subgraph(atoms))
        if key not in self.planarity:
            self.planarity[key] = is_planar_ring_system(g, atoms, self.cfg.planarity_tol)
        return self.planarity[key]

    def preserved_bonds(self, g: MolecularGraph, level: int) -> set[tuple[int, int]]:
        """Single heavy-heavy bonds protected by ring rules at this relaxation level."""
        if level >= 2 or self.cfg.strategy is Strategy.NO_RINGS:
            return set()
        info = perceive_rings(g)
        keep: set[tuple[int, int]] = set()
        for ring_ids, atoms, bonds in zip(info.systems, info.system_atoms, info.system_bonds):
            if not self._planar(g, atoms):
                continue
            if level == 0 or len(ring_ids) == 1:
                keep |= bonds
                continue
            owner: dict[int, int] = {}
            order = sorted(ring_ids, key=lambda k: (-len(info.rings[k]), sorted(info.rings[k])))
            for k in order:
                for a in info.rings[k]:
                    owner.setdefault(a, k)
            for k in order:
                ring = info.rings[k]
                for u, v in zip(ring, ring[1:] + ring[:1]):
                    if owner[u] == owner[v] == k:
                        keep.add((min(u, v), max(u, v)))
        return keep

    def cut_set(self, g: MolecularGraph, level: int = 0, kekule: dict | None = None) -> list[Bond]:
        """Bonds to cut, in canonical (min, max) order.

        Aromatic bonds count as preserved at levels 0-1. Under ``NoRings``
        rules (strategy or level 2) the stored Kekulé order decides instead.
        """
        keep = self.preserved_bonds(g, level)
        no_rings = level >= 2 or self.cfg.strategy is Strategy.NO_RINGS
        cuts = []
        for b in sorted(g.bonds, key=lambda b: b.key):
            if not (g.is_heavy(b.i) and g.is_heavy(b.j)):
                continue
            order = kekule.get(b.key, b.order) if (no_rings and kekule) else b.order
            if level >= MAX_LEVEL:
                cuts.append(b)
            elif order == SINGLE and b.key not in keep:
                cuts.append(b)
        return cuts

    def cut_bonds(self, g: MolecularGraph, level: int = 0) -> FragmentedMolecule:
        if not g.is_connected():
            raise ValueError(f"molecule {g.title!r} is not connected")
        kekule = {b.key: b.order for b in g.bonds}
        if self.cfg.aromaticity:
            g = aromatise(g)
        cuts = self.cut_set(g, level, kekule)
        cut_keys = {b.key for b in cuts}
        kept = [b for b in g.bonds if b.key not in cut_keys]
        motifs = [MotifInstance(comp, level=level) for comp in g.components(kept)]
        return FragmentedMolecule(g, motifs, cuts, kekule=kekule)

    def refragment(self, mol: FragmentedMolecule, inst: MotifInstance, level: int) -> list[MotifInstance]:
        """Split one motif of ``mol`` with the rules of ``level``."""
        sub = mol.source.subgraph(inst.atom_indices)
        kek = None
        if mol.kekule:
            local = {a: k for k, a in enumerate(inst.atom_indices)}
            kek = {}
            for (i, j), o in mol.kekule.items():
                if i in local and j in local:
                    a, b = local[i], local[j]
                    kek[(min(a, b), max(a, b))] = o
        cuts = {b.key for b in self.cut_set(sub, level, kek)}
        kept = [b for b in sub.bonds if b.key not in cuts]
        out = []
        for comp in sub.components(kept):
            out.append(MotifInstance([inst.atom_indices[k] for k in comp], level=level))
        return out


def cutoff_count(alpha: float, n: int) -> int:
    """Minimum occurrences for a motif class to be kept: ``floor(alpha% of n)``."""
    return int(math.floor(alpha / 100.0 * n + 1e-9))


def _pre_key(mol: MolecularGraph, inst: MotifInstance) -> CanonicalKey:
    return canonical_key(mol.subgraph(inst.atom_indices))


def dataset_size(dataset: list[FragmentedMolecule], basis: str) -> int:
    if basis == "molecules":
        return len({fm.source.title for fm in dataset})
    return len(dataset)


def prune_vocabulary(dataset: list[FragmentedMolecule], cfg: FragmentationConfig,
                     fragmenter: Fragmenter | None = None) -> list[FragmentedMolecule]:
    """Re-fragment motif classes rarer than the cutoff until a fixpoint.

    Classes still rare at the last ladder level are kept as they are; their
    instances carry ``level == MAX_LEVEL``.
    """
    fragmenter = fragmenter or Fragmenter(cfg)
    cutoff = cutoff_count(cfg.alpha, dataset_size(dataset, cfg.alpha_basis))
    out = [FragmentedMolecule(fm.source, [MotifInstance(list(m.atom_indices), level=m.level) for m in fm.motifs],
                              list(fm.cut_bonds), kekule=fm.kekule) for fm in dataset]
    if cutoff <= 0:
        return out
    keys = [[_pre_key(fm.source, m) for m in fm.motifs] for fm in out]
    for _ in range(4 * (MAX_LEVEL + 1)):
        counts = Counter(k for ks in keys for k in ks)
        changed = False
        for fi, fm in enumerate(out):
            new_motifs, new_keys = [], []
            for m, k in zip(fm.motifs, keys[fi]):
                if counts[k] >= cutoff or m.level >= MAX_LEVEL:
                    new_motifs.append(m)
                    new_keys.append(k)
                    continue
                changed = True
                pieces = fragmenter.refragment(fm, m, m.level + 1)
                new_motifs.extend(pieces)
                new_keys.extend(_pre_key(fm.source, p) for p in pieces)
            if len(new_motifs) != len(fm.motifs):
                kept = set()
                for p in new_motifs:
                    kept.update(p.atom_indices)
                cut_keys = {b.key for b in fm.cut_bonds}
                atom_motif = {a: i for i, p in enumerate(new_motifs) for a in p.atom_indices}
                for b in fm.source.bonds:
                    if atom_motif[b.i] != atom_motif[b.j] and b.key not in cut_keys:
                        fm.cut_bonds.append(b)
                        cut_keys.add(b.key)
                fm.cut_bonds.sort(key=lambda b: b.key)
            fm.motifs = sorted(new_motifs, key=lambda p: min(p.atom_indices))
            order = {id(p): k for p, k in zip(new_motifs, new_keys)}
            keys[fi] = [order[id(p)] for p in fm.motifs]
        if not changed:
            return out
    raise PruningDiverged("pruning did not reach a fixpoint")


def _rank2(points: np.ndarray, rtol: float = COLLINEAR_RTOL) -> int:
    if len(points) < 2:
        return 0
    s = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    if s[0] <= 1e-12:
        return 0
    return 1 if s[1] < rtol * s[0] else 2


def is_collinear(points, rtol: float = COLLINEAR_RTOL) -> bool:
    """True when the points do not span a plane (incl. a single point)."""
    return _rank2(np.asarray(points, dtype=float), rtol) < 2


def add_dummy_atoms(mol: MolecularGraph, inst: MotifInstance, cfg: FragmentationConfig) -> MotifInstance:
    """Lock the frame of a collinear / single-atom motif with unit-distance dummies.

    Neighbours outside the motif are visited in increasing distance; a dummy
    is placed from the nearest motif atom towards a neighbour only when it
    raises the rank of the point set.
    """
    tol = cfg.collinear_tol
    pts = mol.coords[inst.atom_indices]
    if _rank2(pts, tol) == 2:
        return inst
    inside = set(inst.atom_indices)
    others = [i for i in range(len(mol.atoms)) if i not in inside and not mol.atoms[i].is_dummy]
    coords = mol.coords
    if others:
        d = np.linalg.norm(coords[others][:, None, :] - pts[None, :, :], axis=-1)
        near = d.min(axis=1)
        order = sorted(range(len(others)), key=lambda k: (round(float(near[k]), 9), others[k]))
    else:
        order = []
    dummies: list[np.ndarray] = []
    attach: list[int] = []
    current = pts
    rank = _rank2(current, tol)
    for k in order:
        c = others[k]
        a_local = int(np.argmin(d[k]))
        a = inst.atom_indices[a_local]
        vec = coords[c] - coords[a]
        dist = np.linalg.norm(vec)
        if dist < 1e-9:
            continue
        pos = coords[a] + cfg.dummy_bond_len * vec / dist
        trial = np.vstack([current, pos])
        new_rank = _rank2(trial, tol)
        if new_rank > rank:
            dummies.append(pos)
            attach.append(a)
            current, rank = trial, new_rank
            if rank == 2:
                break
    if rank < 2:
        raise FrameUnlockable(f"cannot lock frame of motif {inst.atom_indices} in {mol.title!r}")
    return MotifInstance(list(inst.atom_indices), dummies, attach, inst.key, inst.level)


def finalise(fm: FragmentedMolecule, cfg: FragmentationConfig) -> FragmentedMolecule:
    """Insert dummies and compute final keys; marks the molecule skipped on failure."""
    motifs = []
    for m in fm.motifs:
        try:
            m2 = add_dummy_atoms(fm.source, m, cfg)
        except FrameUnlockable as exc:
            log.warning("%s", exc)
            return FragmentedMolecule(fm.source, fm.motifs, fm.cut_bonds, skipped=str(exc), kekule=fm.kekule)
        m2.key = canonical_key(m2.graph(fm.source))
        motifs.append(m2)
    return FragmentedMolecule(fm.source, motifs, fm.cut_bonds, kekule=fm.kekule)


def fragment_dataset(mols: list[MolecularGraph], cfg: FragmentationConfig,
                     fragmenter: Fragmenter | None = None) -> list[FragmentedMolecule]:
    """Cut, prune and finalise a whole dataset (order preserved)."""
    fragmenter = fragmenter or Fragmenter(cfg)
    cut = [fragmenter.cut_bonds(g) for g in mols]
    pruned = prune_vocabulary(cut, cfg, fragmenter)
    return [finalise(fm, cfg) for fm in pruned]


# --------------------------------------------------------------------------- checks and reports


def partition_ok(fm: FragmentedMolecule) -> bool:
    seen: list[int] = []
    for m in fm.motifs:
        seen.extend(m.atom_indices)
    if sorted(seen) != list(range(len(fm.source.atoms))):
        return False
    motif_of = {a: i for i, m in enumerate(fm.motifs) for a in m.atom_indices}
    cut = {b.key for b in fm.cut_bonds}
    return all((motif_of[b.i] == motif_of[b.j]) != (b.key in cut) for b in fm.source.bonds)


def rigidity_violations(dataset: list[FragmentedMolecule], tol: float = 0.15) -> list[tuple[str, int, float]]:
    """Motifs whose internal distances vary by ``>= tol`` across conformers of one molecule.

    Returns ``(title, motif index, max variation)``; violations are logged.
    """
    by_title: dict[str, list[FragmentedMolecule]] = {}
    for fm in dataset:
        by_title.setdefault(fm.source.title, []).append(fm)
    bad = []
    for title, confs in by_title.items():
        if len(confs) < 2:
            continue
        ref = confs[0]
        for mi, m in enumerate(ref.motifs):
            idx = m.atom_indices
            ds = []
            for fm in confs:
                p = fm.source.coords[idx]
                ds.append(np.linalg.norm(p[:, None] - p[None], axis=-1))
            spread = float(np.max(np.ptp(np.stack(ds), axis=0)))
            if spread >= tol:
                log.warning("motif %d of %r varies by %.3f A across conformers", mi, title, spread)
                bad.append((title, mi, spread))
    return bad


@dataclass
class FragmentationStats:
    strategy: str
    alpha: float | None
    cutoff: int | None
    mean: float
    median: float
    max: int
    max_size: int
    vocab_size: int
    n_molecules: int

    def row(self) -> dict:
        return {
            "strategy": self.strategy,
            "alpha": "" if self.alpha is None else f"{self.alpha:g}",
            "cutoff": "" if self.cutoff is None else self.cutoff,
            "fragments_mean": f"{self.mean:.3f}",
            "fragments_median": f"{self.median:.1f}",
            "fragments_max": self.max,
            "max_motif_size": self.max_size,
            "vocab_size": self.vocab_size,
            "n_molecules": self.n_molecules,
        }


def fragmentation_stats(dataset: list[FragmentedMolecule], cfg: FragmentationConfig) -> FragmentationStats:
    ok = [fm for fm in dataset if fm.skipped is None]
    counts = np.array([fm.n_motifs for fm in ok]) if ok else np.zeros(1)
    sizes = [m.size for fm in ok for m in fm.motifs]
    keys = {m.key for fm in ok for m in fm.motifs}
    no_rings = cfg.strategy is Strategy.NO_RINGS
    return FragmentationStats(
        strategy=cfg.strategy.value,
        alpha=None if no_rings and cfg.alpha == 0 else cfg.alpha,
        cutoff=cutoff_count(cfg.alpha, dataset_size(dataset, cfg.alpha_basis)),
        mean=float(counts.mean()),
        median=float(np.median(counts)),
        max=int(counts.max()),
        max_size=max(sizes, default=0),
        vocab_size=len(keys),
        n_molecules=len(ok),
    )


def stats_csv(rows: list[FragmentationStats]) -> str:
    buf = io.StringIO()
    fields = list(rows[0].row()) if rows else []
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.row())
    return buf.getvalue()


def fragment_with_vocabulary(g: MolecularGraph, cfg: FragmentationConfig, known: set,
                             fragmenter: Fragmenter | None = None) -> FragmentedMolecule:
    """Fragment one molecule onto an existing vocabulary.

    Motifs whose final key is unknown walk down the relaxation ladder, as
    pruning would have done for a class absent from the vocabulary. Pieces
    still unknown at the last level are kept (out of vocabulary).
    """
    fragmenter = fragmenter or Fragmenter(cfg)
    fm = fragmenter.cut_bonds(g)
    queue = list(fm.motifs)
    done: list[MotifInstance] = []
    while queue:
        m = queue.pop(0)
        try:
            fin = add_dummy_atoms(fm.source, m, cfg)
            fin.key = canonical_key(fin.graph(fm.source))
        except FrameUnlockable as exc:
            if m.level >= MAX_LEVEL:
                return FragmentedMolecule(fm.source, fm.motifs, fm.cut_bonds, skipped=str(exc), kekule=fm.kekule)
            fin = None
        if fin is not None and (fin.key in known or m.level >= MAX_LEVEL):
            done.append(fin)
        else:
            queue.extend(fragmenter.refragment(fm, m, m.level + 1))
    done.sort(key=lambda p: min(p.atom_indices))
    owner = {a: i for i, p in enumerate(done) for a in p.atom_indices}
    cuts = sorted((b for b in fm.source.bonds if owner[b.i] != owner[b.j]), key=lambda b: b.key)
    return FragmentedMolecule(fm.source, done, cuts, kekule=fm.kekule)
