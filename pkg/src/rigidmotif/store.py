"""On-disk formats shared by the command line: fragment store, frame sets, manifests."""
from __future__ import annotations

import hashlib
import io
import json
import zipfile
from pathlib import Path

import numpy as np

from . import __version__
from .fragment import FragmentationConfig, FragmentedMolecule, MotifInstance
from .molgraph import Bond, CanonicalKey, MolecularGraph
from .vocab import MoleculeFrames

FRAGMENTS_FORMAT = "rigidmotif-fragments"
FRAMES_FORMAT = "rigidmotif-frames"
FORMAT_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def dumps(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def config_dict(cfg: FragmentationConfig) -> dict:
    return {
        "alpha": cfg.alpha,
        "strategy": cfg.strategy.value,
        "planarity_tol": cfg.planarity_tol,
        "dummy_bond_len": cfg.dummy_bond_len,
        "alpha_basis": cfg.alpha_basis,
        "collinear_tol": cfg.collinear_tol,
        "aromaticity": cfg.aromaticity,
    }


def fragments_to_json(dataset: list[FragmentedMolecule], cfg: FragmentationConfig, inputs: dict) -> str:
    mols = []
    for rec, fm in enumerate(dataset):
        mols.append({
            "record": rec,
            "title": fm.source.title,
            "skipped": fm.skipped,
            "cut_bonds": [[b.i, b.j, b.order] for b in fm.cut_bonds],
            "aromatic_bonds": [[b.i, b.j] for b in fm.source.bonds if b.order == 4],
            "motifs": [
                {
                    "atoms": list(m.atom_indices),
                    "dummies": [list(map(float, p)) for p in m.dummy_positions],
                    "attach": list(m.dummy_attach),
                    "key": m.key.hex() if m.key is not None else None,
                    "level": m.level,
                }
                for m in fm.motifs
            ],
        })
    return dumps({"format": FRAGMENTS_FORMAT, "version": FORMAT_VERSION, "config": config_dict(cfg),
                  "inputs": inputs, "molecules": mols})


def fragments_from_json(text: str, sources: list[MolecularGraph]) -> tuple[list[FragmentedMolecule], dict]:
    """Rebuild fragmented molecules on top of the re-read source records."""
    doc = json.loads(text)
    if doc.get("format") != FRAGMENTS_FORMAT or doc.get("version") != FORMAT_VERSION:
        raise ValueError("not a fragment store of a supported version")
    if len(doc["molecules"]) != len(sources):
        raise ValueError("fragment store does not match the input records")
    out = []
    for entry, g in zip(doc["molecules"], sources):
        arom = {tuple(sorted(p)) for p in entry.get("aromatic_bonds", [])}
        kekule = {b.key: b.order for b in g.bonds}
        if arom:
            g = MolecularGraph(list(g.atoms), [Bond(b.i, b.j, 4) if b.key in arom else b for b in g.bonds],
                               g.title, dict(g.props))
        motifs = [
            MotifInstance(m["atoms"], [np.array(p) for p in m["dummies"]], m["attach"],
                          CanonicalKey.fromhex(m["key"]) if m["key"] else None, m["level"])
            for m in entry["motifs"]
        ]
        cuts = [Bond(i, j, o) for i, j, o in entry["cut_bonds"]]
        out.append(FragmentedMolecule(g, motifs, cuts, entry["skipped"], kekule=kekule))
    return out, doc


def frames_to_json(frames: list[MoleculeFrames | None]) -> str:
    mols = []
    for f in frames:
        if f is None:
            mols.append(None)
            continue
        mols.append({"title": f.title, "tokens": [int(k) for k in f.tokens], "rots": f.rots.tolist(),
                     "trans": f.trans.tolist(), "correspondences": [list(c) for c in f.correspondences]})
    return dumps({"format": FRAMES_FORMAT, "version": FORMAT_VERSION, "molecules": mols})


def frames_from_json(text: str) -> list[MoleculeFrames | None]:
    doc = json.loads(text)
    if doc.get("format") != FRAMES_FORMAT or doc.get("version") != FORMAT_VERSION:
        raise ValueError("not a frame set of a supported version")
    out = []
    for m in doc["molecules"]:
        if m is None:
            out.append(None)
            continue
        out.append(MoleculeFrames(m["title"], np.array(m["tokens"], dtype=np.int64), np.array(m["rots"]),
                                  np.array(m["trans"]), [tuple(c) for c in m["correspondences"]]))
    return out


def save_npz_deterministic(path, arrays: dict[str, np.ndarray]) -> None:
    """Like ``np.savez`` but with fixed member timestamps and order."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name]), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=_ZIP_DATE), buf.getvalue())


def write_manifest(out_dir: Path, command: str, config: dict, inputs: dict, outputs: list[str]) -> Path:
    out_dir = Path(out_dir)
    doc = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": inputs,
        "outputs": {name: sha256_file(out_dir / name) for name in sorted(outputs)},
    }
    path = out_dir / f"manifest_{command}.json"
    path.write_text(dumps(doc))
    return path
