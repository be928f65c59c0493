"""Frame-to-atom reconstruction and desk-scale evaluation metrics."""
from __future__ import annotations

import csv
import io
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .fragment import cutoff_count
from .molgraph import AROMATIC, DOUBLE, DUMMY, SINGLE, Atom, Bond, MolecularGraph
from .vocab import MASK, Vocabulary

log = logging.getLogger(__name__)

# order-2 S-O entry of the reference table is longer than its single bond
KNOWN_TABLE_INVERSIONS = {("O", "S", 2)}


class MaskedToken(ValueError):
    pass


class MissingTableEntry(KeyError):
    pass


def _data_text(name: str) -> str:
    return resources.files("rigidmotif").joinpath("data", name).read_text()


@dataclass
class BondTable:
    """Bond lengths (pm) per order with margins; lookup is symmetric in the pair."""

    lengths: dict[int, dict[tuple[str, str], float]]
    margins: dict[int, float]
    provenance: str = ""

    @classmethod
    def from_json(cls, text: str) -> "BondTable":
        doc = json.loads(text)
        lengths: dict[int, dict[tuple[str, str], float]] = {}
        for order, table in doc["lengths"].items():
            o = int(order)
            lengths[o] = {}
            for a, row in table.items():
                for b, v in row.items():
                    lengths[o][(a, b)] = float(v)
                    lengths[o].setdefault((b, a), float(v))
        margins = {int(k): float(v) for k, v in doc["margins"].items()}
        tab = cls(lengths, margins, doc.get("provenance", ""))
        bad = tab.violations() - KNOWN_TABLE_INVERSIONS
        if bad:
            log.warning("bond table ordering violations: %s", sorted(bad))
        return tab

    @classmethod
    def default(cls) -> "BondTable":
        return _default_bond_table()

    def violations(self) -> set[tuple[str, str, int]]:
        """Pairs whose order-``o`` length is not shorter than order ``o - 1``.

        Non-positive lengths raise. The shipped reference table keeps its one
        known inversion (S-O) for parity with the reference code.
        """
        bad = set()
        for o, tab in self.lengths.items():
            for pair, v in tab.items():
                if v <= 0:
                    raise ValueError(f"non-positive length for {pair}")
                lower = self.lengths.get(o - 1, {}).get(pair)
                if lower is not None and not v < lower:
                    bad.add((min(pair), max(pair), o))
        return bad

    def thresholds(self, a: str, b: str) -> list[tuple[int, float]]:
        """``(order, upper distance in Angstrom)`` for the orders the table knows."""
        if (a, b) not in self.lengths[1]:
            raise MissingTableEntry(f"no bond length for {a}-{b}")
        out = []
        for o in sorted(self.lengths):
            v = self.lengths[o].get((a, b))
            if v is not None:
                out.append((o, (v + self.margins[o]) / 100.0))
        return out

    def bond_order(self, a: str, b: str, distance: float) -> int:
        """Highest order whose window contains ``distance``; 0 for no bond."""
        order = 0
        for o, thr in self.thresholds(a, b):
            if distance < thr and (o == 1 or order == o - 1):
                order = o
        return order


@dataclass
class ValencyTable:
    valences: dict[str, tuple[int, ...]]
    provenance: str = ""

    @classmethod
    def from_json(cls, text: str) -> "ValencyTable":
        doc = json.loads(text)
        val = {k: tuple(int(x) for x in v) for k, v in doc["valences"].items()}
        if any(len(v) == 0 for v in val.values()):
            raise ValueError("empty valence set")
        return cls(val, doc.get("provenance", ""))

    @classmethod
    def default(cls) -> "ValencyTable":
        return _default_valency_table()

    def allowed(self, element: str) -> tuple[int, ...]:
        if element not in self.valences:
            raise MissingTableEntry(f"no valences for {element}")
        return self.valences[element]


@lru_cache(maxsize=1)
def _default_bond_table() -> BondTable:
    return BondTable.from_json(_data_text("bond_table.json"))


@lru_cache(maxsize=1)
def _default_valency_table() -> ValencyTable:
    return ValencyTable.from_json(_data_text("valency_table.json"))


# ---------------------------------------------------------------------- reconstruction


def reconstruct(vocab: Vocabulary, rots, trans, tokens, title: str = "") -> MolecularGraph:
    """Atoms ``P R + x`` per motif, dummies dropped, descriptor bonds copied."""
    tokens = [int(k) for k in tokens]
    if any(k == MASK for k in tokens):
        raise MaskedToken("cannot reconstruct a MASK token")
    atoms: list[Atom] = []
    bonds: list[Bond] = []
    for tok, r, x in zip(tokens, rots, trans):
        d = vocab.descriptor(tok)
        pts = d.pose @ np.asarray(r, dtype=float) + np.asarray(x, dtype=float)
        remap = {}
        for a, (el, p) in enumerate(zip(d.types, pts)):
            if el == DUMMY:
                continue
            remap[a] = len(atoms)
            atoms.append(Atom(el, p))
        for b in d.bonds:
            if b.i in remap and b.j in remap:
                bonds.append(Bond(remap[b.i], remap[b.j], b.order))
    return MolecularGraph(atoms, bonds, title, {"motif_tokens": " ".join(str(k) for k in tokens)})


def infer_bonds(g: MolecularGraph, table: BondTable | None = None) -> list[Bond]:
    """Distance-lookup bonds between all real atom pairs, in ``(i, j)`` order."""
    table = table or BondTable.default()
    idx = [i for i, a in enumerate(g.atoms) if not a.is_dummy and a.element != DUMMY]
    els = [g.atoms[i].element for i in idx]
    for a in set(els):
        for b in set(els):
            table.thresholds(a, b)
    if len(idx) < 2:
        return []
    xyz = g.coords[idx]
    dist = np.linalg.norm(xyz[:, None] - xyz[None], axis=-1)
    out = []
    for p in range(len(idx)):
        for q in range(p + 1, len(idx)):
            o = table.bond_order(els[p], els[q], float(dist[p, q]))
            if o:
                out.append(Bond(idx[p], idx[q], o))
    return out


def with_inferred_bonds(g: MolecularGraph, table: BondTable | None = None) -> MolecularGraph:
    return MolecularGraph(list(g.atoms), infer_bonds(g, table), g.title, dict(g.props))


def bond_orders_agree(descriptor_order: int, inferred_order: int) -> bool:
    """Aromatic descriptor bonds accept an inferred single or double bond."""
    if descriptor_order == AROMATIC:
        return inferred_order in (SINGLE, DOUBLE)
    return descriptor_order == inferred_order


def valences(g: MolecularGraph, bonds: list[Bond]) -> np.ndarray:
    v = np.zeros(len(g.atoms), dtype=int)
    for b in bonds:
        v[b.i] += b.order
        v[b.j] += b.order
    return v


def stability(g: MolecularGraph, bonds: list[Bond], valency: ValencyTable | None = None) -> tuple[float, bool]:
    """Percentage of atoms whose bond-order sum is allowed, and whether all are."""
    valency = valency or ValencyTable.default()
    if not g.atoms:
        return 0.0, False
    v = valences(g, bonds)
    ok = [int(v[i]) in valency.allowed(a.element) for i, a in enumerate(g.atoms)]
    return 100.0 * sum(ok) / len(ok), all(ok)


def connectivity_validity(g: MolecularGraph, bonds: list[Bond], valency: ValencyTable | None = None) -> tuple[bool, bool]:
    """(valid, connected). Valid is the valence screen on a nonempty molecule."""
    if not g.atoms:
        return False, False
    _, valid = stability(g, bonds, valency)
    connected = len(g.components(bonds)) == 1
    return valid, connected


def _tv(p: Counter, q: Counter) -> float:
    np_, nq = sum(p.values()), sum(q.values())
    if np_ == 0 or nq == 0:
        raise ValueError("empty marginal")
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0) / np_ - q.get(k, 0) / nq) for k in keys)


def atom_marginal(mols) -> Counter:
    c: Counter = Counter()
    for g in mols:
        c.update(a.element for a in g.atoms if a.element != DUMMY)
    return c


def bond_marginal(bond_lists) -> Counter:
    c: Counter = Counter()
    for bl in bond_lists:
        c.update(b.order for b in bl)
    return c


def total_variation(sampled, reference, sampled_bonds=None, reference_bonds=None,
                    table: BondTable | None = None) -> tuple[float, float]:
    """TV of atom-type and bond-type marginals (bonds inferred when not given)."""
    if not sampled or not reference:
        raise ValueError("both sets must be nonempty")
    sb = sampled_bonds if sampled_bonds is not None else [infer_bonds(g, table) for g in sampled]
    rb = reference_bonds if reference_bonds is not None else [infer_bonds(g, table) for g in reference]
    return _tv(atom_marginal(sampled), atom_marginal(reference)), _tv(bond_marginal(sb), bond_marginal(rb))


def motif_frequency_ratios(sampled_tokens, n_sampled: int, train_counts, n_train: int,
                           alpha: float = 0.1) -> tuple[float, float]:
    """(common, uncommon) ratios of per-molecule motif rates, sampled over training.

    A class is common when its training count reaches the ``alpha`` % cutoff.
    ``sampled_tokens`` is an iterable of token sequences; ``train_counts`` is
    indexed by class id - 1.
    """
    train_counts = np.asarray(train_counts)
    cut = cutoff_count(alpha, n_train)
    common = train_counts >= max(cut, 1)
    s = np.zeros(len(train_counts))
    for toks in sampled_tokens:
        for k in toks:
            if 1 <= k <= len(train_counts):
                s[k - 1] += 1
    out = []
    for grp in (common, ~common):
        tr = train_counts[grp].sum() / n_train
        sm = s[grp].sum() / max(n_sampled, 1)
        out.append(float(sm / tr) if tr > 0 else float("nan"))
    return out[0], out[1]


def uniqueness(mols) -> float:
    """Percentage of distinct molecules by canonical key of the inferred-bond graph."""
    from .molgraph import canonical_key

    if not mols:
        return 0.0
    keys = set()
    for g in mols:
        gb = with_inferred_bonds(g)
        try:
            keys.add(canonical_key(gb))
        except ValueError:
            keys.add(("disconnected", g.title, len(keys)))
    return 100.0 * len(keys) / len(mols)


@dataclass
class MetricsReport:
    n_molecules: int
    atom_stability: float
    molecule_stability: float
    validity: float
    connectivity: float
    valid_and_connected: float
    uniqueness: float
    tv_atoms: float
    tv_bonds: float
    common_ratio: float = float("nan")
    uncommon_ratio: float = float("nan")
    compression_all_atom: float = float("nan")
    compression_heavy_atom: float = float("nan")

    def rows(self) -> list[tuple[str, float]]:
        out = list(asdict(self).items())
        out.append(("tv_atoms_x1e2", self.tv_atoms * 1e2))
        out.append(("tv_bonds_x1e3", self.tv_bonds * 1e3))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in self.rows():
            w.writerow([k, repr(float(v)) if not isinstance(v, int) else v])
        return buf.getvalue()


def evaluate(sampled: list[MolecularGraph], reference: list[MolecularGraph],
             table: BondTable | None = None, valency: ValencyTable | None = None) -> MetricsReport:
    """All structure metrics of ``sampled``, TV against ``reference``."""
    table = table or BondTable.default()
    valency = valency or ValencyTable.default()
    sb = [infer_bonds(g, table) for g in sampled]
    rb = [infer_bonds(g, table) for g in reference]
    n_atoms = stable_atoms = stable_mols = valid = conn = both = 0
    for g, bl in zip(sampled, sb):
        pct, ok = stability(g, bl, valency)
        n_atoms += len(g.atoms)
        stable_atoms += round(pct * len(g.atoms) / 100.0)
        stable_mols += ok
        v, c = connectivity_validity(g, bl, valency)
        valid += v
        conn += c
        both += v and c
    n = max(len(sampled), 1)
    tva, tvb = total_variation(sampled, reference, sb, rb)
    return MetricsReport(
        n_molecules=len(sampled),
        atom_stability=100.0 * stable_atoms / max(n_atoms, 1),
        molecule_stability=100.0 * stable_mols / n,
        validity=100.0 * valid / n,
        connectivity=100.0 * conn / n,
        valid_and_connected=100.0 * both / n,
        uniqueness=uniqueness(sampled),
        tv_atoms=tva,
        tv_bonds=tvb,
    )
