import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rigidmotif.molgraph import (
    AROMATIC,
    Atom,
    Bond,
    Disconnected,
    MolecularGraph,
    ParseError,
    aromatic_rings,
    aromatise,
    canonical_key,
    formula,
    is_planar_ring_system,
    parse_sdf,
    perceive_rings,
    plane_rms,
    write_sdf,
)


def _permuted(g: MolecularGraph, perm) -> MolecularGraph:
    inv = np.argsort(perm)
    atoms = [g.atoms[p] for p in perm]
    bonds = [Bond(int(inv[b.i]), int(inv[b.j]), b.order) for b in g.bonds]
    return MolecularGraph(atoms, bonds, g.title)


def _nx(g: MolecularGraph):
    h = nx.Graph()
    for i, a in enumerate(g.atoms):
        h.add_node(i, el=a.element)
    for b in g.bonds:
        h.add_edge(b.i, b.j, order=b.order)
    return h


def test_roundtrip_sdf(corpus):
    text = write_sdf(corpus)
    back = parse_sdf(text)
    assert len(back) == len(corpus)
    for a, b in zip(corpus, back):
        assert a.title == b.title
        assert [x.element for x in a.atoms] == [x.element for x in b.atoms]
        assert np.allclose(a.coords, b.coords, atol=1e-4)
        assert sorted(x.key + (x.order,) for x in a.bonds) == sorted(x.key + (x.order,) for x in b.bonds)


def test_properties_survive_roundtrip():
    g = MolecularGraph([Atom("C", np.zeros(3))], [], "m", {"seed": "7", "K": "1"})
    back = parse_sdf(write_sdf([g]))[0]
    assert back.props == {"seed": "7", "K": "1"}


def test_parse_error_has_line_number():
    bad = "x\n\n\n  1  0  0  0  0  0  0  0  0  0999 V2000\n    0.0 bad\nM  END\n$$$$\n"
    with pytest.raises(ParseError) as exc:
        parse_sdf(bad)
    assert exc.value.line == 5


def test_unknown_element_rejected():
    text = "x\n\n\n  1  0  0  0  0  0  0  0  0  0999 V2000\n" \
           "    0.0000    0.0000    0.0000 Xq  0  0  0  0  0  0  0  0  0  0  0  0\nM  END\n$$$$\n"
    with pytest.raises(ParseError):
        parse_sdf(text)


def test_empty_input_gives_no_records():
    assert parse_sdf("") == []


def test_charges_roundtrip():
    g = MolecularGraph([Atom("N", np.zeros(3), charge=1), Atom("O", np.ones(3), charge=-1)], [Bond(0, 1, 1)], "zw")
    back = parse_sdf(write_sdf([g]))[0]
    assert [a.charge for a in back.atoms] == [1, -1]


def test_canonical_key_invariant_under_relabelling(corpus):
    rng = np.random.default_rng(0)
    for g in corpus:
        perm = rng.permutation(len(g.atoms))
        assert canonical_key(g) == canonical_key(_permuted(g, perm)), g.title


def test_canonical_key_agrees_with_networkx_isomorphism(corpus):
    graphs = corpus[:30]
    keys = [canonical_key(g) for g in graphs]
    nm = nx.algorithms.isomorphism.categorical_node_match("el", None)
    em = nx.algorithms.isomorphism.categorical_edge_match("order", None)
    for i in range(len(graphs)):
        for j in range(i + 1, len(graphs)):
            iso = nx.is_isomorphic(_nx(graphs[i]), _nx(graphs[j]), node_match=nm, edge_match=em)
            assert iso == (keys[i] == keys[j])


def test_canonical_key_sees_bond_order(by_title):
    g = by_title["ethene"]
    single = MolecularGraph(g.atoms, [Bond(b.i, b.j, 1) for b in g.bonds], "x")
    assert canonical_key(g) != canonical_key(single)


def test_disconnected_key_raises():
    g = MolecularGraph([Atom("C", np.zeros(3)), Atom("C", np.ones(3))], [], "two")
    with pytest.raises(Disconnected):
        canonical_key(g)


@st.composite
def random_tree(draw):
    n = draw(st.integers(2, 12))
    parents = [draw(st.integers(0, k - 1)) for k in range(1, n)]
    els = [draw(st.sampled_from(["C", "N", "O"])) for _ in range(n)]
    atoms = [Atom(e, np.array([float(k), 0.0, 0.0])) for k, e in enumerate(els)]
    bonds = [Bond(p, k + 1, 1) for k, p in enumerate(parents)]
    perm = draw(st.permutations(range(n)))
    return MolecularGraph(atoms, bonds, "t"), list(perm)


@given(random_tree())
@settings(max_examples=60, deadline=None)
def test_key_invariance_property(data):
    g, perm = data
    assert canonical_key(g) == canonical_key(_permuted(g, perm))


def test_rings_benzene_and_naphthalene(by_title):
    info = perceive_rings(by_title["benzene"])
    assert [len(r) for r in info.rings] == [6]
    info = perceive_rings(by_title["naphthalene"])
    assert sorted(len(r) for r in info.rings) == [6, 6]
    assert len(info.systems) == 1
    assert len(info.system_atoms[0]) == 10


def test_biphenyl_has_two_systems(by_title):
    info = perceive_rings(by_title["biphenyl"])
    assert len(info.systems) == 2


def test_acyclic_has_no_rings(by_title):
    assert perceive_rings(by_title["propane"]).rings == []


def test_planarity(by_title):
    g = by_title["benzene"]
    assert is_planar_ring_system(g, perceive_rings(g).system_atoms[0])
    h = by_title["cyclohexane"]
    assert not is_planar_ring_system(h, perceive_rings(h).system_atoms[0])
    assert plane_rms(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]])) < 1e-12
    with pytest.raises(ValueError):
        is_planar_ring_system(g, [])


def test_aromatic_perception(by_title):
    for name, n in [("benzene", 1), ("naphthalene", 2), ("pyridine", 1), ("furan", 1), ("thiophene", 1),
                    ("pyrrole", 1), ("indole", 2), ("cyclohexane", 0), ("tetralin", 1), ("biphenyl", 2)]:
        assert len(aromatic_rings(by_title[name])) == n, name


def test_aromatise_makes_kekule_forms_equal(by_title):
    g = by_title["benzene"]
    # shift the double bonds by one position around the ring
    ring = perceive_rings(g).rings[0]
    dbl = {tuple(sorted((ring[k], ring[(k + 1) % 6]))) for k in range(1, 6, 2)}
    bonds = [Bond(b.i, b.j, 2 if b.key in dbl else (1 if b.order == 2 else b.order)) for b in g.bonds]
    other = MolecularGraph(g.atoms, bonds, "kek2")
    assert canonical_key(aromatise(g)) == canonical_key(aromatise(other))
    assert sum(b.order == AROMATIC for b in aromatise(g).bonds) == 6


def test_formula(by_title):
    assert formula(by_title["ethanol"]) == "C2H6O"
    assert formula(by_title["chloroform"]) == "CHCl3"


def test_subgraph_keeps_order(by_title):
    g = by_title["ethanol"]
    s = g.subgraph([2, 0, 1])
    assert [a.element for a in s.atoms] == [g.atoms[k].element for k in (2, 0, 1)]
