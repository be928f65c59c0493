import json

import numpy as np
import pytest

from rigidmotif import store
from rigidmotif.fragment import FragmentationConfig, fragment_dataset
from rigidmotif.vocab import build_vocabulary


@pytest.fixture(scope="module")
def frag(request):
    corpus = request.getfixturevalue("corpus")
    cfg = FragmentationConfig(alpha=0.5)
    return corpus, cfg, fragment_dataset(corpus, cfg)


def test_fragments_roundtrip(frag):
    corpus, cfg, ds = frag
    text = store.fragments_to_json(ds, cfg, {"x.sdf": "abc"})
    back, doc = store.fragments_from_json(text, corpus)
    assert doc["config"] == store.config_dict(cfg)
    assert store.fragments_to_json(back, cfg, {"x.sdf": "abc"}) == text
    for a, b in zip(ds, back):
        assert a.kekule == b.kekule
        assert [m.atom_indices for m in a.motifs] == [m.atom_indices for m in b.motifs]
        assert [m.key for m in a.motifs] == [m.key for m in b.motifs]
        assert {x.key for x in a.source.bonds if x.order == 4} == {x.key for x in b.source.bonds if x.order == 4}


def test_fragments_mismatch(frag):
    corpus, cfg, ds = frag
    text = store.fragments_to_json(ds, cfg, {})
    with pytest.raises(ValueError):
        store.fragments_from_json(text, corpus[:-1])
    bad = json.loads(text)
    bad["version"] = 99
    with pytest.raises(ValueError):
        store.fragments_from_json(json.dumps(bad), corpus)


def test_frames_roundtrip(frag):
    _, _, ds = frag
    frames = build_vocabulary(ds).frames + [None]
    back = store.frames_from_json(store.frames_to_json(frames))
    for a, b in zip(frames, back):
        if a is None:
            assert b is None
            continue
        assert a.title == b.title and np.array_equal(a.tokens, b.tokens)
        assert np.array_equal(a.rots, b.rots) and np.array_equal(a.trans, b.trans)
        assert a.correspondences == b.correspondences


def test_npz_deterministic(tmp_path):
    arrs = {"b": np.arange(5.0), "a": np.eye(3)}
    store.save_npz_deterministic(tmp_path / "1.npz", arrs)
    store.save_npz_deterministic(tmp_path / "2.npz", dict(reversed(list(arrs.items()))))
    assert (tmp_path / "1.npz").read_bytes() == (tmp_path / "2.npz").read_bytes()
    with np.load(tmp_path / "1.npz") as z:
        assert np.array_equal(z["a"], np.eye(3))


def test_manifest(tmp_path):
    (tmp_path / "out.txt").write_text("hello\n")
    p = store.write_manifest(tmp_path, "demo", {"k": 1}, {"in": "x"}, ["out.txt"])
    doc = json.loads(p.read_text())
    assert p.name == "manifest_demo.json"
    assert doc["outputs"]["out.txt"] == store.sha256_text("hello\n")
    assert doc["config"] == {"k": 1}
