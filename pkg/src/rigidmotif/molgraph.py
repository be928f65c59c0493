"""Molecular graphs: V2000 SDF I/O, ring perception and canonical keys."""
from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

SINGLE, DOUBLE, TRIPLE, AROMATIC = 1, 2, 3, 4
BOND_ORDERS = (SINGLE, DOUBLE, TRIPLE, AROMATIC)
DUMMY = "DU"
MAX_RING_SIZE = 10

# V2000 atom-block charge codes
_CHARGE_CODES = {0: 0, 1: 3, 2: 2, 3: 1, 4: 0, 5: -1, 6: -2, 7: -3}
_CHARGE_TO_CODE = {3: 1, 2: 2, 1: 3, 0: 0, -1: 5, -2: 6, -3: 7}


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class Disconnected(ValueError):
    pass


def load_element_vocabulary(path=None) -> frozenset[str]:
    """Read one element symbol per line; ``#`` starts a comment."""
    if path is None:
        text = resources.files("rigidmotif.data").joinpath("elements.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    syms = [ln.split("#")[0].strip() for ln in text.splitlines()]
    return frozenset(s for s in syms if s)


DEFAULT_ELEMENTS = load_element_vocabulary()


@dataclass
class Atom:
    element: str
    pos: np.ndarray
    is_dummy: bool = False
    charge: int = 0

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    order: int = SINGLE

    @property
    def key(self) -> tuple[int, int]:
        return (self.i, self.j) if self.i < self.j else (self.j, self.i)


@dataclass
class MolecularGraph:
    atoms: list[Atom]
    bonds: list[Bond]
    title: str = ""
    props: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.atoms)
        seen = set()
        for b in self.bonds:
            if b.i == b.j:
                raise ValueError(f"self-loop on atom {b.i}")
            if not (0 <= b.i < n and 0 <= b.j < n):
                raise ValueError(f"bond {b.i}-{b.j} out of range for {n} atoms")
            if b.key in seen:
                raise ValueError(f"duplicate bond {b.key}")
            seen.add(b.key)

    def __len__(self):
        return len(self.atoms)

    @property
    def coords(self) -> np.ndarray:
        if not self.atoms:
            return np.zeros((0, 3))
        return np.stack([a.pos for a in self.atoms])

    @property
    def elements(self) -> list[str]:
        return [a.element for a in self.atoms]

    def is_heavy(self, i: int) -> bool:
        a = self.atoms[i]
        return a.element != "H" and not a.is_dummy

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Neighbour lists of ``(atom, bond order)``."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for b in self.bonds:
            adj[b.i].append((b.j, b.order))
            adj[b.j].append((b.i, b.order))
        return adj

    def bond_map(self) -> dict[tuple[int, int], Bond]:
        return {b.key: b for b in self.bonds}

    def components(self, bonds: Iterable[Bond] | None = None) -> list[list[int]]:
        """Connected components (sorted atom lists, ordered by smallest atom)."""
        bonds = self.bonds if bonds is None else bonds
        parent = list(range(len(self.atoms)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for b in bonds:
            ri, rj = find(b.i), find(b.j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
        groups: dict[int, list[int]] = {}
        for i in range(len(self.atoms)):
            groups.setdefault(find(i), []).append(i)
        return sorted(groups.values(), key=lambda g: g[0])

    def is_connected(self) -> bool:
        return len(self.atoms) > 0 and len(self.components()) == 1

    def subgraph(self, indices: Sequence[int]) -> "MolecularGraph":
        """Induced subgraph; atoms keep the order of ``indices``."""
        index = {a: k for k, a in enumerate(indices)}
        atoms = [Atom(self.atoms[a].element, self.atoms[a].pos.copy(), self.atoms[a].is_dummy, self.atoms[a].charge)
                 for a in indices]
        bonds = [Bond(index[b.i], index[b.j], b.order) for b in self.bonds if b.i in index and b.j in index]
        return MolecularGraph(atoms, bonds, self.title)

    def copy(self) -> "MolecularGraph":
        return self.subgraph(range(len(self.atoms)))


# --------------------------------------------------------------------------- SDF


def _field(line: str, lo: int, hi: int, lineno: int, what: str, conv=int):
    try:
        return conv(line[lo:hi])
    except ValueError:
        raise ParseError(lineno, f"bad {what} field {line[lo:hi]!r}") from None


def _parse_record(lines: list[str], first: int, elements) -> MolecularGraph:
    if len(lines) < 4:
        raise ParseError(first + len(lines), "record truncated before counts line")
    title = lines[0].strip()
    counts = lines[3]
    cl = first + 3
    if "V3000" in counts:
        raise ParseError(cl, "V3000 records are not supported")
    n_atoms = _field(counts, 0, 3, cl, "atom count")
    n_bonds = _field(counts, 3, 6, cl, "bond count")
    if n_atoms < 0 or n_bonds < 0:
        raise ParseError(cl, "negative counts")
    if len(lines) < 4 + n_atoms + n_bonds:
        raise ParseError(first + len(lines), "atom/bond block truncated")
    atoms = []
    for k in range(n_atoms):
        ln = lines[4 + k]
        lineno = first + 4 + k
        x = _field(ln, 0, 10, lineno, "x", float)
        y = _field(ln, 10, 20, lineno, "y", float)
        z = _field(ln, 20, 30, lineno, "z", float)
        sym = ln[31:34].strip()
        if sym not in elements and sym != DUMMY:
            raise ParseError(lineno, f"unknown element {sym!r}")
        code = ln[36:39].strip()
        charge = _CHARGE_CODES.get(int(code), 0) if code.lstrip("-").isdigit() else 0
        atoms.append(Atom(sym, (x, y, z), is_dummy=(sym == DUMMY), charge=charge))
    bonds = []
    seen = set()
    for k in range(n_bonds):
        ln = lines[4 + n_atoms + k]
        lineno = first + 4 + n_atoms + k
        i = _field(ln, 0, 3, lineno, "bond atom")
        j = _field(ln, 3, 6, lineno, "bond atom")
        order = _field(ln, 6, 9, lineno, "bond order")
        if not (1 <= i <= n_atoms and 1 <= j <= n_atoms):
            raise ParseError(lineno, f"bond index out of range ({i}, {j})")
        if i == j:
            raise ParseError(lineno, "bond joins an atom to itself")
        if order not in BOND_ORDERS:
            raise ParseError(lineno, f"unsupported bond order {order}")
        b = Bond(i - 1, j - 1, order)
        if b.key in seen:
            raise ParseError(lineno, f"duplicate bond {i}-{j}")
        seen.add(b.key)
        bonds.append(b)
    props: dict[str, str] = {}
    rest = lines[4 + n_atoms + n_bonds:]
    k = 0
    while k < len(rest):
        ln = rest[k]
        if ln.startswith("M  CHG"):
            toks = ln.split()
            for a, c in zip(toks[3::2], toks[4::2]):
                atoms[int(a) - 1].charge = int(c)
        elif ln.startswith("> "):
            name = ln[ln.find("<") + 1: ln.find(">", ln.find("<"))] if "<" in ln else ln[2:].strip()
            vals = []
            k += 1
            while k < len(rest) and rest[k].strip():
                vals.append(rest[k])
                k += 1
            props[name] = "\n".join(vals)
        k += 1
    return MolecularGraph(atoms, bonds, title, props)


def parse_sdf(data, elements=DEFAULT_ELEMENTS) -> list[MolecularGraph]:
    """Parse a V2000 multi-record SDF from bytes or str."""
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("utf-8", errors="replace")
    lines = data.splitlines()
    out = []
    start = 0
    for k, ln in enumerate(lines):
        if ln.strip() == "$$$$":
            if any(s.strip() for s in lines[start:k]):
                out.append(_parse_record(lines[start:k], start + 1, elements))
            start = k + 1
    if any(s.strip() for s in lines[start:]):
        out.append(_parse_record(lines[start:], start + 1, elements))
    return out


def read_sdf(path, elements=DEFAULT_ELEMENTS) -> list[MolecularGraph]:
    with open(path, "rb") as fh:
        return parse_sdf(fh.read(), elements)


def write_sdf(graphs: Iterable[MolecularGraph], include_dummies: bool = False) -> str:
    """Serialise graphs to V2000 SDF text (coordinates ``%10.4f``)."""
    buf = io.StringIO()
    for g in graphs:
        keep = [i for i, a in enumerate(g.atoms) if include_dummies or not a.is_dummy]
        sub = g.subgraph(keep) if len(keep) != len(g.atoms) else g
        if len(sub.atoms) > 999 or len(sub.bonds) > 999:
            raise ValueError("V2000 supports at most 999 atoms and bonds")
        buf.write(f"{sub.title}\n  rigidmotif\n\n")
        buf.write(f"{len(sub.atoms):3d}{len(sub.bonds):3d}  0  0  0  0  0  0  0  0999 V2000\n")
        charged = []
        for k, a in enumerate(sub.atoms):
            x, y, z = a.pos
            code = _CHARGE_TO_CODE.get(a.charge, 0)
            if a.charge:
                charged.append((k + 1, a.charge))
            buf.write(f"{x:10.4f}{y:10.4f}{z:10.4f} {a.element:<3s} 0{code:3d}  0  0  0  0  0  0  0  0  0  0\n")
        for b in sub.bonds:
            buf.write(f"{b.i + 1:3d}{b.j + 1:3d}{b.order:3d}  0\n")
        for s in range(0, len(charged), 8):
            chunk = charged[s:s + 8]
            buf.write(f"M  CHG{len(chunk):3d}" + "".join(f" {a:3d} {c:3d}" for a, c in chunk) + "\n")
        buf.write("M  END\n")
        for name, val in sub.props.items():
            buf.write(f">  <{name}>\n{val}\n\n")
        buf.write("$$$$\n")
    return buf.getvalue()


# --------------------------------------------------------------------------- rings


@dataclass
class RingInfo:
    rings: list[tuple[int, ...]]
    systems: list[list[int]]  # ring indices per fused system
    system_atoms: list[list[int]]
    system_bonds: list[set[tuple[int, int]]]

    def ring_bonds(self) -> set[tuple[int, int]]:
        out: set[tuple[int, int]] = set()
        for s in self.system_bonds:
            out |= s
        return out


def _ring_edges(cycle):
    n = len(cycle)
    return [tuple(sorted((cycle[k], cycle[(k + 1) % n]))) for k in range(n)]


def _simple_cycles(adj: list[list[int]], max_len: int) -> list[tuple[int, ...]]:
    """All simple cycles up to ``max_len``, each reported once from its smallest atom."""
    found = []
    for s in range(len(adj)):
        stack = [(s, [s])]
        while stack:
            v, path = stack.pop()
            for u in adj[v]:
                if u == s and len(path) >= 3:
                    if path[1] < path[-1]:
                        found.append(tuple(path))
                elif u > s and u not in path and len(path) < max_len:
                    stack.append((u, path + [u]))
    return found


def perceive_rings(g: MolecularGraph, max_size: int = MAX_RING_SIZE) -> RingInfo:
    """Relevant rings up to ``max_size`` and their edge-fused ring systems.

    A cycle is kept when it is not a GF(2) sum of strictly shorter cycles,
    so naphthalene yields its two six-rings but not the ten-ring perimeter.
    """
    adj = [[u for u, _ in nb] for nb in g.adjacency()]
    cycles = _simple_cycles(adj, max_size)
    cycles.sort(key=lambda c: (len(c), sorted(c)))
    edge_index: dict[tuple[int, int], int] = {}
    vecs = []
    for c in cycles:
        bits = 0
        for e in _ring_edges(c):
            bits |= 1 << edge_index.setdefault(e, len(edge_index))
        vecs.append(bits)

    rings: list[tuple[int, ...]] = []
    basis: dict[int, int] = {}  # pivot bit -> vector, cycles strictly shorter than current length
    pending: list[int] = []
    cur_len = 0
    for c, v in zip(cycles, vecs):
        if len(c) != cur_len:
            for p in pending:
                _insert(basis, p)
            pending = []
            cur_len = len(c)
        if _reduce(basis, v):
            rings.append(c)
            pending.append(v)

    # fused systems: rings sharing an edge
    edges_of = [set(_ring_edges(r)) for r in rings]
    parent = list(range(len(rings)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in combinations(range(len(rings)), 2):
        if edges_of[a] & edges_of[b]:
            parent[find(a)] = find(b)
    groups: dict[int, list[int]] = {}
    for k in range(len(rings)):
        groups.setdefault(find(k), []).append(k)
    systems = sorted(groups.values(), key=lambda s: min(min(rings[k]) for k in s))
    sys_atoms = [sorted({a for k in s for a in rings[k]}) for s in systems]
    sys_bonds = [set().union(*(edges_of[k] for k in s)) for s in systems]
    return RingInfo(rings, systems, sys_atoms, sys_bonds)


def _reduce(basis: dict[int, int], v: int) -> int:
    while v:
        top = v.bit_length() - 1
        if top not in basis:
            return v
        v ^= basis[top]
    return 0


def _insert(basis: dict[int, int], v: int) -> None:
    v = _reduce(basis, v)
    if v:
        basis[v.bit_length() - 1] = v


def plane_rms(points) -> float:
    """RMS distance of points from their SVD best-fit plane."""
    p = np.asarray(points, dtype=float)
    if len(p) <= 3:
        return 0.0
    p = p - p.mean(axis=0)
    s = np.linalg.svd(p, compute_uv=False)
    return float(s[-1] / np.sqrt(len(p)))


def is_planar_ring_system(g: MolecularGraph, system: Sequence[int], tol: float = 0.1) -> bool:
    if len(system) == 0:
        raise ValueError("empty ring system")
    return plane_rms(g.coords[list(system)]) <= tol


_LONE_PAIR_DONORS = {"N", "O", "S", "Se", "P"}


def aromatic_rings(g: MolecularGraph, info: RingInfo | None = None) -> list[int]:
    """Indices of rings with a Kekulé-alternating pattern (Hückel-type, 5 and 6 rings).

    Six-rings: every atom has exactly one double bond, to an atom of the same
    fused system. Five-rings: four such atoms plus one N/O/S/Se/P without
    double bonds.
    """
    info = info or perceive_rings(g)
    dbl: list[list[int]] = [[] for _ in g.atoms]
    for b in g.bonds:
        if b.order in (DOUBLE, AROMATIC):
            dbl[b.i].append(b.j)
            dbl[b.j].append(b.i)
    sys_of = {}
    for s, ring_ids in enumerate(info.systems):
        for k in ring_ids:
            sys_of[k] = set(info.system_atoms[s])
    out = []
    for k, ring in enumerate(info.rings):
        if len(ring) not in (5, 6):
            continue
        members = sys_of[k]
        paired = [len(dbl[a]) == 1 and dbl[a][0] in members for a in ring]
        if len(ring) == 6 and all(paired):
            out.append(k)
        elif len(ring) == 5:
            donors = [a for a, p in zip(ring, paired) if not p]
            if (len(donors) == 1 and not dbl[donors[0]]
                    and g.atoms[donors[0]].element in _LONE_PAIR_DONORS):
                out.append(k)
    return out


def aromatise(g: MolecularGraph) -> MolecularGraph:
    """Copy of ``g`` with bonds of aromatic rings set to ``AROMATIC``.

    Makes keys and automorphisms independent of the Kekulé structure a file
    happens to store.
    """
    info = perceive_rings(g)
    arom: set[tuple[int, int]] = set()
    for k in aromatic_rings(g, info):
        arom.update(_ring_edges(info.rings[k]))
    if not arom:
        return g
    bonds = [Bond(b.i, b.j, AROMATIC) if b.key in arom else b for b in g.bonds]
    return MolecularGraph(list(g.atoms), bonds, g.title, dict(g.props))


# --------------------------------------------------------------------------- canonical labelling


@dataclass(frozen=True)
class CanonicalKey:
    digest: bytes

    def __str__(self):
        return self.digest.hex()[:16]

    def hex(self) -> str:
        return self.digest.hex()

    @classmethod
    def fromhex(cls, s: str) -> "CanonicalKey":
        return cls(bytes.fromhex(s))


def atom_labels(g: MolecularGraph) -> list[str]:
    return [DUMMY if a.is_dummy else a.element for a in g.atoms]


def _rank(sigs) -> list[int]:
    order = {s: k for k, s in enumerate(sorted(set(sigs)))}
    return [order[s] for s in sigs]


def refine(colours: list[int], adj: list[list[tuple[int, int]]]) -> list[int]:
    """Colour refinement to the coarsest equitable partition finer than ``colours``.

    Colours are ranks of isomorphism-invariant signatures, so the result does
    not depend on atom numbering.
    """
    n_col = len(set(colours))
    while True:
        sigs = [(colours[v], tuple(sorted((o, colours[u]) for u, o in adj[v]))) for v in range(len(colours))]
        new = _rank(sigs)
        n_new = len(set(new))
        if n_new == n_col:
            return new
        colours, n_col = new, n_new


def _individualise(colours: list[int], v: int) -> list[int]:
    return _rank([(c, 0 if u == v else 1) for u, c in enumerate(colours)])


def _serialise(labels, adj, colours) -> tuple:
    inv = [0] * len(colours)
    for v, c in enumerate(colours):
        inv[c] = v
    lab = tuple(labels[v] for v in inv)
    edges = tuple(sorted((min(colours[v], colours[u]), max(colours[v], colours[u]), o)
                         for v in range(len(adj)) for u, o in adj[v] if v < u))
    return (lab, edges)


def search_leaves(labels: Sequence[str], adj: list[list[tuple[int, int]]], prune_twins: bool = False):
    """Yield ``(serialisation, colouring)`` for every leaf of the refinement tree.

    Each leaf colouring is a bijection atom -> position. Leaves sharing a
    serialisation differ by a graph automorphism, and every automorphism
    appears exactly once among leaves matching a given leaf.

    ``prune_twins`` individualises one vertex per group of non-adjacent twins
    (same neighbours, same bond orders). Swapping twins is an automorphism
    fixing the path so far, so the minimal serialisation is unchanged, but the
    automorphism guarantee above no longer holds.
    """
    twin = [tuple(sorted(x)) for x in adj] if prune_twins else None
    init = refine(_rank(list(labels)), adj)
    stack = [init]
    while stack:
        col = stack.pop()
        n_col = len(set(col))
        if n_col == len(col):
            yield _serialise(labels, adj, col), col
            continue
        sizes: dict[int, int] = {}
        for c in col:
            sizes[c] = sizes.get(c, 0) + 1
        target = min(c for c, k in sizes.items() if k > 1)
        cell = [v for v, c in enumerate(col) if c == target]
        if twin is not None:
            seen = set()
            cell = [v for v in cell if not (twin[v] in seen or seen.add(twin[v]))]
        for v in reversed(cell):
            stack.append(refine(_individualise(col, v), adj))


def canonical_form(labels: Sequence[str], adj) -> tuple[tuple, list[int]]:
    """Minimal leaf serialisation and one colouring achieving it."""
    best = None
    best_col = None
    for ser, col in search_leaves(labels, adj, prune_twins=True):
        if best is None or ser < best:
            best, best_col = ser, col
    if best is None:
        return ((), ()), []
    return best, best_col


def canonical_key(g: MolecularGraph) -> CanonicalKey:
    """Relabelling-invariant digest of the element- and bond-order-labelled graph."""
    if not g.is_connected():
        raise Disconnected(f"graph with {len(g.atoms)} atoms has {len(g.components())} components")
    ser, _ = canonical_form(atom_labels(g), g.adjacency())
    return CanonicalKey(hashlib.sha256(repr(ser).encode()).digest())


def formula(g: MolecularGraph) -> str:
    """Hill-order formula string; dummies are counted as ``DU``."""
    counts: dict[str, int] = {}
    for lab in atom_labels(g):
        counts[lab] = counts.get(lab, 0) + 1
    keys = sorted(counts)
    if "C" in counts:
        keys = ["C"] + (["H"] if "H" in counts else []) + [k for k in keys if k not in ("C", "H")]
    return "".join(f"{k}{counts[k] if counts[k] > 1 else ''}" for k in keys)
