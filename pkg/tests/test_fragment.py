import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rigidmotif.fragment import (
    FragmentationConfig,
    Fragmenter,
    FrameUnlockable,
    Strategy,
    add_dummy_atoms,
    cutoff_count,
    finalise,
    fragment_dataset,
    fragment_with_vocabulary,
    fragmentation_stats,
    is_collinear,
    partition_ok,
    prune_vocabulary,
    rigidity_violations,
    stats_csv,
    MotifInstance,
)
from rigidmotif.molgraph import AROMATIC, Atom, Bond, MolecularGraph

CFG0 = FragmentationConfig(alpha=0)


def _line_molecule():
    """H-C#C-H on the x axis: every frame is degenerate."""
    xs = [-1.66, -0.60, 0.60, 1.66]
    atoms = [Atom(e, np.array([x, 0.0, 0.0])) for e, x in zip("HCCH", xs)]
    return MolecularGraph(atoms, [Bond(0, 1, 1), Bond(1, 2, 3), Bond(2, 3, 1)], "ethyne")


@pytest.mark.parametrize("title,n", [
    ("ethane", 2), ("ethene", 1), ("benzene", 1), ("toluene", 2), ("biphenyl", 2), ("cyclohexane", 6),
    ("trifluorotoluene", 5), ("tetralin", 5), ("indole", 1), ("acetonitrile", 2), ("chloroform", 4),
    ("naphthalene", 1), ("propane", 3), ("methyl_acetate", 4),
])
def test_hand_counted_fragments(by_title, title, n):
    fm = Fragmenter(CFG0).cut_bonds(by_title[title])
    assert fm.n_motifs == n
    assert partition_ok(fm)


def test_no_bonds_to_hydrogen_are_cut(corpus):
    fr = Fragmenter(CFG0)
    for g in corpus:
        fm = fr.cut_bonds(g)
        for b in fm.cut_bonds:
            assert g.is_heavy(b.i) and g.is_heavy(b.j)


def test_double_and_triple_bonds_preserved(corpus):
    for strat in Strategy:
        fr = Fragmenter(FragmentationConfig(alpha=0, strategy=strat))
        for g in corpus:
            orders = {b.key: b.order for b in g.bonds}
            assert all(orders[b.key] == 1 for b in fr.cut_bonds(g).cut_bonds)


def test_tetralin_keeps_aromatic_ring(by_title):
    g = by_title["tetralin"]
    fm = Fragmenter(CFG0).cut_bonds(g)
    sizes = sorted(m.size for m in fm.motifs)
    assert sizes == [3, 3, 3, 3, 10]  # four CH2 and the C6H4 ring
    ring = max(fm.motifs, key=lambda m: m.size)
    assert sum(fm.source.atoms[a].element == "C" for a in ring.atom_indices) == 6


def test_tetralin_without_aromaticity_shreds_the_ring(by_title):
    fm = Fragmenter(FragmentationConfig(alpha=0, aromaticity=False)).cut_bonds(by_title["tetralin"])
    assert max(m.size for m in fm.motifs) < 10


def test_no_rings_breaks_rings_along_kekule_singles(by_title):
    fr = Fragmenter(FragmentationConfig(alpha=0, strategy="NoRings"))
    fm = fr.cut_bonds(by_title["benzene"])
    assert sorted(m.size for m in fm.motifs) == [4, 4, 4]  # three HC=CH units


def test_nonplanar_ring_is_cut(by_title):
    fm = Fragmenter(CFG0).cut_bonds(by_title["cyclohexane"])
    assert all(m.size == 3 for m in fm.motifs)


def test_planar_fused_system_kept(by_title):
    fm = Fragmenter(CFG0).cut_bonds(by_title["naphthalene"])
    assert fm.n_motifs == 1


def test_cutoff_is_floor():
    assert cutoff_count(0.1, 999) == 0
    assert cutoff_count(0.1, 1000) == 1
    assert cutoff_count(0.5, 50) == 0
    assert cutoff_count(10, 50) == 5
    assert cutoff_count(0, 10 ** 6) == 0


def test_config_validation():
    with pytest.raises(ValueError):
        FragmentationConfig(alpha=-1)
    with pytest.raises(ValueError):
        FragmentationConfig(alpha_basis="atoms")
    with pytest.raises(ValueError):
        FragmentationConfig(strategy="Rings")


def test_dummy_for_single_atom_motif(by_title):
    g = by_title["chloroform"]
    fm = finalise(Fragmenter(CFG0).cut_bonds(g), CFG0)
    for m in fm.motifs:
        pts = m.points(g)
        assert not is_collinear(pts, CFG0.collinear_tol)
        for pos, att in zip(m.dummy_positions, m.dummy_attach):
            assert np.isclose(np.linalg.norm(pos - g.coords[att]), 1.0)
    single = [m for m in fm.motifs if len(m.atom_indices) == 1]
    assert single and all(len(m.dummy_positions) == 2 for m in single)


def test_collinear_pair_gets_one_dummy(by_title):
    g = by_title["acetonitrile"]
    fm = finalise(Fragmenter(CFG0).cut_bonds(g), CFG0)
    cn = [m for m in fm.motifs if len(m.atom_indices) == 2]
    assert len(cn) == 1 and len(cn[0].dummy_positions) == 1


def test_ethyne_is_unlockable():
    g = _line_molecule()
    inst = MotifInstance([0, 1, 2, 3])
    with pytest.raises(FrameUnlockable):
        add_dummy_atoms(g, inst, CFG0)
    fm = finalise(Fragmenter(CFG0).cut_bonds(g), CFG0)
    assert fm.skipped is not None


def test_rank_tolerance_is_configurable():
    pts = np.array([[0, 0, 0], [1, 0, 0], [2, 1e-4, 0.0]])
    assert is_collinear(pts, 1e-3)
    assert not is_collinear(pts, 1e-6)


def test_partition_on_corpus(corpus, conformers):
    for alpha in (0, 5, 20):
        for fm in fragment_dataset(corpus + conformers, FragmentationConfig(alpha=alpha)):
            assert fm.skipped is None
            assert partition_ok(fm)


def test_pruning_reaches_cutoff_or_last_level(corpus):
    cfg = FragmentationConfig(alpha=10)
    ds = fragment_dataset(corpus, cfg)
    cut = cutoff_count(cfg.alpha, len(corpus))
    from collections import Counter
    counts = Counter(m.key for fm in ds for m in fm.motifs)
    for fm in ds:
        for m in fm.motifs:
            assert counts[m.key] >= cut or m.level == 3


def test_fragments_per_molecule_monotone_in_alpha(corpus):
    means = []
    for alpha in (0, 2, 5, 10, 20, 50):
        st_ = fragmentation_stats(fragment_dataset(corpus, FragmentationConfig(alpha=alpha)),
                                  FragmentationConfig(alpha=alpha))
        means.append(st_.mean)
    assert all(a <= b + 1e-12 for a, b in zip(means, means[1:]))


def test_no_rings_gives_most_fragments_and_small_motifs(corpus):
    nr = fragmentation_stats(fragment_dataset(corpus, FragmentationConfig(alpha=0, strategy="NoRings")),
                             FragmentationConfig(alpha=0, strategy="NoRings"))
    pr = fragmentation_stats(fragment_dataset(corpus, CFG0), CFG0)
    assert nr.mean > pr.mean
    assert nr.max_size < pr.max_size


def test_determinism(corpus):
    a = fragment_dataset(corpus, FragmentationConfig(alpha=5))
    b = fragment_dataset(corpus, FragmentationConfig(alpha=5))
    assert [[(m.atom_indices, m.key) for m in x.motifs] for x in a] == \
           [[(m.atom_indices, m.key) for m in x.motifs] for x in b]


def test_fragment_with_vocabulary_matches_pruning(corpus):
    for alpha in (0, 5, 10):
        cfg = FragmentationConfig(alpha=alpha)
        ds = fragment_dataset(corpus, cfg)
        known = {m.key for fm in ds for m in fm.motifs}
        for g, fm in zip(corpus, ds):
            got = fragment_with_vocabulary(g, cfg, known)
            assert [m.atom_indices for m in got.motifs] == [m.atom_indices for m in fm.motifs]


def test_rigidity_across_conformers(conformers):
    ds = fragment_dataset(conformers, FragmentationConfig(alpha=0))
    assert rigidity_violations(ds) == []


def test_stats_csv_header(corpus):
    st_ = fragmentation_stats(fragment_dataset(corpus[:5], CFG0), CFG0)
    text = stats_csv([st_])
    assert text.splitlines()[0].startswith("strategy,alpha,cutoff,fragments_mean")


def test_alpha_basis_molecules_counts_titles(conformers):
    cfg = FragmentationConfig(alpha=50, alpha_basis="molecules")
    # 5 distinct titles -> cutoff floor(2.5) = 2
    st_ = fragmentation_stats(fragment_dataset(conformers, cfg), cfg)
    assert st_.cutoff == 2


@st.composite
def random_alkane(draw):
    n = draw(st.integers(1, 8))
    rng = np.random.default_rng(draw(st.integers(0, 10 ** 6)))
    pos = [np.zeros(3)]
    parents = [None]
    for k in range(1, n):
        p = draw(st.integers(0, k - 1))
        d = rng.normal(size=3)
        pos.append(pos[p] + 1.54 * d / np.linalg.norm(d))
        parents.append(p)
    atoms = [Atom("C", x) for x in pos]
    bonds = [Bond(p, k, 1) for k, p in enumerate(parents) if p is not None]
    return MolecularGraph(atoms, bonds, "alkane")


@given(random_alkane())
@settings(max_examples=40, deadline=None)
def test_partition_property(g):
    fm = Fragmenter(CFG0).cut_bonds(g)
    assert partition_ok(fm)
    assert fm.n_motifs == len(g.atoms)
    assert all(b.order != AROMATIC for b in fm.source.bonds)
