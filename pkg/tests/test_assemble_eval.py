import csv
import hashlib
import io
from importlib import resources

import numpy as np
import pytest

from rigidmotif.assemble_eval import (
    BondTable,
    MaskedToken,
    MissingTableEntry,
    ValencyTable,
    bond_orders_agree,
    evaluate,
    infer_bonds,
    motif_frequency_ratios,
    reconstruct,
    stability,
    total_variation,
    uniqueness,
)
from rigidmotif.fragment import FragmentationConfig, fragment_dataset
from rigidmotif.molgraph import AROMATIC, DOUBLE, SINGLE, TRIPLE, Atom, MolecularGraph
from rigidmotif.vocab import MASK, build_vocabulary

DIGESTS = {
    "bond_table.json": "931f52ab09dbf3eaa719e0332f278aa57ec51f1ec09d4f563cb6274a156bed9d",
    "valency_table.json": "faafd2d5309e96b01905f99555153a298ce49db273d823e4ca5fb7efeb08c197",
}


@pytest.fixture(scope="module")
def built(request):
    corpus = request.getfixturevalue("corpus")
    ds = fragment_dataset(corpus, FragmentationConfig(alpha=0))
    return ds, build_vocabulary(ds)


@pytest.mark.parametrize("name", sorted(DIGESTS))
def test_tables_are_pinned(name):
    data = resources.files("rigidmotif").joinpath("data", name).read_bytes()
    assert hashlib.sha256(data).hexdigest() == DIGESTS[name]


def test_only_known_inversion():
    assert BondTable.default().violations() == {("O", "S", 2)}


def test_inversion_detected_on_bad_table():
    tab = BondTable({1: {("C", "C"): 154.0}, 2: {("C", "C"): 160.0}}, {1: 10.0, 2: 5.0})
    assert tab.violations() == {("C", "C", 2)}
    with pytest.raises(ValueError):
        BondTable({1: {("C", "C"): 0.0}}, {1: 10.0}).violations()


@pytest.mark.parametrize("d,order", [(1.54, 1), (1.34, 2), (1.20, 3), (2.5, 0)])
def test_carbon_bond_orders(d, order):
    assert BondTable.default().bond_order("C", "C", d) == order


def test_lookup_is_symmetric():
    tab = BondTable.default()
    assert tab.thresholds("C", "O") == tab.thresholds("O", "C")
    with pytest.raises(MissingTableEntry):
        tab.thresholds("C", "Xe")
    with pytest.raises(MissingTableEntry):
        ValencyTable.default().allowed("Xe")


def test_aromatic_agreement():
    assert bond_orders_agree(AROMATIC, SINGLE) and bond_orders_agree(AROMATIC, DOUBLE)
    assert not bond_orders_agree(AROMATIC, TRIPLE)
    assert bond_orders_agree(DOUBLE, DOUBLE) and not bond_orders_agree(SINGLE, DOUBLE)


def test_saturated_molecules_stable(by_title):
    for name in ("ethane", "propane", "cyclohexane", "ethanol", "methylamine"):
        g = by_title[name]
        pct, ok = stability(g, infer_bonds(g))
        assert ok and pct == 100.0, name


def test_inferred_bonds_recover_single_bond_graph(by_title):
    g = by_title["propane"]
    assert {b.key: b.order for b in infer_bonds(g)} == {b.key: b.order for b in g.bonds}


def test_reconstruct_masked_raises(built):
    _, vb = built
    f = vb.frames[0]
    toks = f.tokens.copy()
    toks[0] = MASK
    with pytest.raises(MaskedToken):
        reconstruct(vb.vocab, f.rots, f.trans, toks)


def test_reconstruction_matches_source(built):
    ds, vb = built
    for fm, f in zip(ds, vb.frames):
        if f is None:
            continue
        g = reconstruct(vb.vocab, f.rots, f.trans, f.tokens, fm.source.title)
        src = fm.source
        assert sorted(a.element for a in g.atoms) == sorted(a.element for a in src.atoms)
        for a in g.atoms:
            d = [np.linalg.norm(a.pos - b.pos) for b in src.atoms if b.element == a.element]
            assert min(d) < 0.25, fm.source.title
        assert g.props["motif_tokens"] == " ".join(map(str, f.tokens))


def test_self_tv_is_zero(corpus):
    assert total_variation(corpus, corpus) == (0.0, 0.0)
    a, _ = total_variation(corpus[:5], corpus[15:20])
    assert a > 0


def test_uniqueness(corpus):
    assert uniqueness(corpus) == 100.0
    assert uniqueness(corpus[:3] + corpus[:3]) == 50.0
    assert uniqueness([]) == 0.0


def test_motif_ratios():
    # cutoff floor(20% of 10) = 2: class 1 (count 10) is common, class 2 (count 1) is not
    common, rare = motif_frequency_ratios([[1], [1, 2], [1]], 3, [10, 1], 10, alpha=20)
    assert np.isclose(common, 1.0)
    assert np.isclose(rare, (1 / 3) / (1 / 10))
    c2, r2 = motif_frequency_ratios([[1]], 1, [10, 1], 10, alpha=20)
    assert r2 == 0.0 and c2 == 1.0


def test_report_csv(corpus):
    rep = evaluate(corpus[:10], corpus)
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["metric", "value"]
    d = dict(rows[1:])
    assert int(d["n_molecules"]) == 10
    assert float(d["tv_atoms_x1e2"]) == pytest.approx(100 * rep.tv_atoms)
    assert float(d["connectivity"]) == 100.0


def test_empty_molecule_not_valid():
    g = MolecularGraph([], [], "empty")
    assert stability(g, []) == (0.0, False)
    g1 = MolecularGraph([Atom("C", np.zeros(3))], [], "c")
    assert stability(g1, [])[1] is False
