"""Command line: fragment | vocab | train | sample | eval | stats.

Every command writes its outputs plus ``manifest_<command>.json`` into
``--output-dir``. A JSON ``--config`` file given before the subcommand holds
one section per subcommand whose keys are option names; flags win over it.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .assemble_eval import BondTable, ValencyTable, evaluate, motif_frequency_ratios, reconstruct
from .denoise import OracleDenoiser
from .denoise.toy import ToyConfig, ToyModel, TrainConfig, TrainExample, centre, train
from .flow_cont import RotSchedule
from .flow_disc import SamplingKnobs
from .fragment import (
    FragmentationConfig,
    Fragmenter,
    Strategy,
    finalise,
    fragment_with_vocabulary,
    fragmentation_stats,
    prune_vocabulary,
    stats_csv,
)
from .molgraph import ParseError, formula, read_sdf, write_sdf
from .sampler import draw_motif_counts, sample
from .store import (
    config_dict,
    fragments_from_json,
    fragments_to_json,
    frames_from_json,
    frames_to_json,
    sha256_file,
    write_manifest,
)
from .vocab import Vocabulary, build_vocabulary, compression_stats

log = logging.getLogger("rigidmotif")


# --------------------------------------------------------------------------- helpers


def _read_inputs(paths) -> tuple[list, dict]:
    mols, digests = [], {}
    for p in paths:
        try:
            recs = read_sdf(p)
        except ParseError as exc:
            raise click.ClickException(f"{p}: line {exc.line}: {exc.reason}") from None
        except OSError as exc:
            raise click.ClickException(f"{p}: {exc.strerror}") from None
        mols.extend(recs)
        digests[str(p)] = sha256_file(p)
    if not mols:
        raise click.ClickException("no records")
    return mols, digests


def _pmap(fn, items, threads: int):
    """Order-preserving map, in worker processes when ``threads > 1``."""
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


class _Cut:
    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, g):
        return Fragmenter(self.cfg).cut_bonds(g)


class _Finalise:
    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, fm):
        return finalise(fm, self.cfg)


def fragment_parallel(mols, cfg: FragmentationConfig, threads: int = 1):
    """:func:`fragment.fragment_dataset` with per-molecule steps spread over workers."""
    cut = _pmap(_Cut(cfg), mols, threads)
    pruned = prune_vocabulary(cut, cfg)
    return _pmap(_Finalise(cfg), pruned, threads)


def _write(out: Path, name: str, text: str) -> str:
    (out / name).write_text(text)
    return name


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _frag_config(alpha, strategy, planarity_tol, alpha_basis, collinear_tol, aromaticity) -> FragmentationConfig:
    try:
        return FragmentationConfig(alpha=alpha, strategy=Strategy(strategy), planarity_tol=planarity_tol,
                                   alpha_basis=alpha_basis, collinear_tol=collinear_tol, aromaticity=aromaticity)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def _load_config(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise click.BadParameter("config must be a JSON object of subcommand sections", param_hint="--config")
    out = {}
    for cmd, section in doc.items():
        if not isinstance(section, dict):
            raise click.BadParameter(f"section {cmd!r} must be an object", param_hint="--config")
        out[cmd] = {k.replace("-", "_"): v for k, v in section.items()}
    return out


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from None


def _load_vocab_dir(vocab_dir: Path):
    vocab = Vocabulary.load(vocab_dir / "vocab.json")
    frames = frames_from_json((vocab_dir / "frames.json").read_text())
    man = vocab_dir / "manifest_vocab.json"
    frag_cfg = json.loads(man.read_text())["config"].get("fragmentation") if man.exists() else None
    return vocab, frames, frag_cfg


# --------------------------------------------------------------------------- group


@click.group(context_settings={"help_option_names": ["--help"]})
@click.version_option(__version__, "--version")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON file with one section of option defaults per subcommand.")
@click.option("--log-level", default="WARNING", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]))
@click.pass_context
def main(ctx, config_path, log_level):
    """Rigid-motif fragmentation and SE(3) x token flow matching toolkit."""
    logging.basicConfig(level=log_level, format="%(levelname)s %(name)s: %(message)s")
    if config_path:
        ctx.default_map = _load_config(config_path)


_threads = click.option("--threads", default=1, show_default=True, type=click.IntRange(1),
                        help="Maximum worker processes.")


# --------------------------------------------------------------------------- fragment


def _fragment_options(f):
    opts = [
        click.option("--alpha", default=0.1, show_default=True, type=float,
                     help="Pruning threshold in percent of the dataset size."),
        click.option("--strategy", default="PlanarRings", show_default=True,
                     type=click.Choice([s.value for s in Strategy])),
        click.option("--planarity-tol", default=0.1, show_default=True, type=float,
                     help="Plane-fit RMS (Angstrom) below which a ring system is planar."),
        click.option("--alpha-basis", default="records", show_default=True,
                     type=click.Choice(["records", "molecules"]),
                     help="Count conformers (records) or distinct titles toward the cutoff."),
        click.option("--collinear-tol", default=1e-3, show_default=True, type=float,
                     help="Singular-value ratio below which a motif counts as collinear."),
        click.option("--aromaticity/--no-aromaticity", default=True, show_default=True,
                     help="Relabel Kekule-alternating rings as aromatic before cutting."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


@main.command("fragment")
@click.option("--input", "inputs", multiple=True, required=True, type=click.Path(dir_okay=False),
              help="SDF file; repeat for several.")
@click.option("--output-dir", required=True, type=click.Path(file_okay=False))
@_fragment_options
@_threads
def cmd_fragment(inputs, output_dir, alpha, strategy, planarity_tol, alpha_basis, collinear_tol,
                 aromaticity, threads):
    """Cut bonds, prune rare motifs and write the fragment store."""
    cfg = _frag_config(alpha, strategy, planarity_tol, alpha_basis, collinear_tol, aromaticity)
    mols, digests = _read_inputs(inputs)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    store = out / "fragments.json"
    dataset = None
    if store.exists():
        try:
            cached, doc = fragments_from_json(store.read_text(), mols)
            if doc["inputs"] == digests and doc["config"] == config_dict(cfg):
                dataset = cached
                log.info("fragment store up to date, reusing %s", store)
        except (ValueError, KeyError):
            pass
    if dataset is None:
        dataset = fragment_parallel(mols, cfg, threads)
        store.write_text(fragments_to_json(dataset, cfg, digests))
    st = fragmentation_stats(dataset, cfg)
    _write(out, "fragment_report.csv", stats_csv([st]))
    counts = [(k, fm.source.title, fm.n_motifs if fm.skipped is None else "", fm.skipped or "")
              for k, fm in enumerate(dataset)]
    _write(out, "fragment_counts.csv", _csv_text(["record", "title", "n_motifs", "skipped"], counts))
    write_manifest(out, "fragment", config_dict(cfg), digests,
                   ["fragments.json", "fragment_report.csv", "fragment_counts.csv"])
    r = st.row()
    click.echo(f"{r['n_molecules']} molecules, {r['fragments_mean']} fragments/molecule, "
               f"{r['vocab_size']} motif classes, max motif size {r['max_motif_size']}")


# --------------------------------------------------------------------------- vocab


@main.command("vocab")
@click.option("--fragments-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--output-dir", required=True, type=click.Path(file_okay=False))
@click.option("--rmsd-tol", default=0.25, show_default=True, type=float,
              help="Maximum superposition RMSD (Angstrom) for frames and symmetries.")
@click.option("--closure-tol", default=1e-3, show_default=True, type=float,
              help="Geodesic tolerance (rad) for symmetry-group deduplication and closure.")
def cmd_vocab(fragments_dir, output_dir, rmsd_tol, closure_tol):
    """Build the motif vocabulary and per-molecule frames."""
    fdir = Path(fragments_dir)
    store = fdir / "fragments.json"
    if not store.exists():
        raise click.ClickException(f"no fragment store in {fdir}; run 'fragment' first")
    doc = json.loads(store.read_text())
    mols, digests = _read_inputs(list(doc["inputs"]))
    if digests != doc["inputs"]:
        raise click.ClickException("input files changed since fragmentation; rerun 'fragment'")
    dataset, _ = fragments_from_json(store.read_text(), mols)
    vb = build_vocabulary(dataset, rmsd_tol=rmsd_tol, closure_tol=closure_tol)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    vb.vocab.save(out / "vocab.json")
    _write(out, "frames.json", frames_to_json(vb.frames))
    rows = []
    for tok, d in enumerate(vb.vocab.entries, start=1):
        rows.append([tok, d.key.hex(), formula(d.graph()), d.n_atoms, int(d.real_mask().sum()), d.count, len(d.sym)])
    _write(out, "vocab_classes.csv",
           _csv_text(["token", "key", "formula", "n_points", "n_atoms", "count", "sym_size"], rows))
    sizes = [len(d.sym) for d in vb.vocab.entries]
    counts = np.array([d.count for d in vb.vocab.entries], dtype=float)
    n_real = np.array([d.real_mask().sum() for d in vb.vocab.entries], dtype=float)
    c = vb.compression
    lines = [
        f"vocabulary_size: {len(vb.vocab)}",
        f"molecules: {sum(f is not None for f in vb.frames)}",
        f"skipped_molecules: {sum(f is None for f in vb.frames)}",
        f"motif_instances: {int(counts.sum())}",
        f"mean_atoms_per_motif_class: {n_real.mean():.4f}" if len(n_real) else "mean_atoms_per_motif_class: nan",
        f"mean_atoms_per_motif_instance: {(counts @ n_real) / counts.sum():.4f}" if counts.sum() else
        "mean_atoms_per_motif_instance: nan",
        f"max_symmetry_group_size: {vb.max_sym}",
        "symmetry_group_sizes: " + " ".join(f"{s}:{sizes.count(s)}" for s in sorted(set(sizes))),
    ]
    lines += [f"compression_{k}: {v:.4f}" if isinstance(v, float) else f"compression_{k}: {v}"
              for k, v in sorted(c.items())]
    _write(out, "vocab_report.txt", "\n".join(lines) + "\n")
    frag_cfg = doc["config"]
    write_manifest(out, "vocab", {"rmsd_tol": rmsd_tol, "closure_tol": closure_tol, "fragmentation": frag_cfg},
                   {str(store): sha256_file(store), **digests},
                   ["vocab.json", "frames.json", "vocab_classes.csv", "vocab_report.txt"])
    click.echo("\n".join(lines))


# --------------------------------------------------------------------------- train


def training_examples(vocab: Vocabulary, frames) -> list[TrainExample]:
    out = []
    for f in frames:
        if f is None:
            continue
        out.append(TrainExample(np.asarray(f.tokens), np.asarray(f.rots), centre(f.trans),
                                [vocab.sym(int(k)) for k in f.tokens]))
    return out


@main.command("train")
@click.option("--vocab-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--output-dir", required=True, type=click.Path(file_okay=False))
@click.option("--epochs", default=100, show_default=True, type=click.IntRange(1))
@click.option("--lr", default=1e-3, show_default=True, type=float)
@click.option("--batch-size", default=32, show_default=True, type=click.IntRange(1))
@click.option("--hidden", default="128,128", show_default=True, help="Widths of the two hidden layers, comma-separated.")
@click.option("--n-rbf", default=8, show_default=True, type=click.IntRange(1))
@click.option("--optimizer", default="adam", show_default=True, type=click.Choice(["adam", "sgd"]))
@click.option("--loss-weighting", default="endpoint", show_default=True, type=click.Choice(["endpoint", "none"]))
@click.option("--self-conditioning/--no-self-conditioning", default=False, show_default=True)
@click.option("--augment/--no-augment", default=True, show_default=True,
              help="Random global rotation of every training example.")
@click.option("--seed", default=0, show_default=True, type=int)
def cmd_train(vocab_dir, output_dir, epochs, lr, batch_size, hidden, n_rbf, optimizer, loss_weighting,
              self_conditioning, augment, seed):
    """Train the small equivariant toy denoiser on vocabulary frames."""
    vdir = Path(vocab_dir)
    vocab, frames, _ = _load_vocab_dir(vdir)
    data = training_examples(vocab, frames)
    if not data:
        raise click.ClickException("no training molecules with frames")
    widths = tuple(int(h) for h in _parse_floats(hidden))
    if len(widths) != 2 or min(widths) < 1:
        raise click.BadParameter("expected two positive widths, e.g. 128,128", param_hint="--hidden")
    cfg = ToyConfig(n_classes=len(vocab), hidden=widths, n_rbf=n_rbf, self_conditioning=self_conditioning,
                    loss_weighting=loss_weighting)
    model = ToyModel(cfg, rng=np.random.default_rng(seed))
    tc = TrainConfig(epochs=epochs, lr=lr, batch_size=batch_size, optimizer=optimizer,
                     augment_rotation=augment, seed=seed)
    res = train(model, data, tc)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "checkpoint.npz")
    _write(out, "loss_curve.csv", res.curve_csv())
    conf = {"epochs": epochs, "lr": lr, "batch_size": batch_size, "hidden": list(widths), "n_rbf": n_rbf,
            "optimizer": optimizer, "loss_weighting": loss_weighting, "self_conditioning": self_conditioning,
            "augment": augment, "seed": seed}
    write_manifest(out, "train", conf, {str(vdir / n): sha256_file(vdir / n) for n in ("vocab.json", "frames.json")},
                   ["checkpoint.npz", "loss_curve.csv"])
    click.echo(f"trained on {len(data)} molecules, {len(res.losses)} steps, final loss {res.losses[-1]:.6g}")


# --------------------------------------------------------------------------- sample


class _SampleJob:
    """One molecule: its own seed, K, denoiser and trajectory."""

    def __init__(self, denoisers, vocab, steps, knobs, sched):
        self.denoisers, self.vocab, self.steps, self.knobs, self.sched = denoisers, vocab, steps, knobs, sched

    def __call__(self, job):
        idx, seed, K = job
        rng = np.random.default_rng(seed)
        res = sample(self.denoisers[K], 1, K, rng, steps=self.steps, knobs=self.knobs, sched=self.sched,
                     record=True)
        g = reconstruct(self.vocab, res.rots[0], res.trans[0], res.tokens[0], title=f"sample_{idx}")
        g.props["seed"] = str(seed)
        g.props["K"] = str(K)
        return g, res.trajectory


def _parse_knobs(text: str, **kw) -> SamplingKnobs:
    try:
        return SamplingKnobs.parse_temperature(text, **kw)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--temperature") from None


@main.command("sample")
@click.option("--vocab-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--output-dir", required=True, type=click.Path(file_okay=False))
@click.option("--denoiser", default="oracle", show_default=True, type=click.Choice(["oracle", "checkpoint"]))
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), help="Toy model for --denoiser checkpoint.")
@click.option("--n", "n_samples", default=10, show_default=True, type=click.IntRange(1))
@click.option("--steps", default=100, show_default=True, type=click.IntRange(1))
@click.option("--temperature", default="1.0", show_default=True, help="lo or lo:hi (linear in t).")
@click.option("--eta", default=0.0, show_default=True, type=click.FloatRange(0.0), help="Remasking rate.")
@click.option("--schedule", default="linear", show_default=True, type=click.Choice(["linear", "exp"]),
              help="Rotation speed schedule.")
@click.option("--schedule-c", default=10.0, show_default=True, type=float, help="Rate of the exp schedule.")
@click.option("--uniform-prior/--masking-prior", default=False, show_default=True)
@click.option("--sigma", default=0.0, show_default=True, type=click.FloatRange(0.0),
              help="Extra translation bandwidth of the oracle (Angstrom).")
@click.option("--seed", default=0, show_default=True, type=int)
@_threads
def cmd_sample(vocab_dir, output_dir, denoiser, checkpoint, n_samples, steps, temperature, eta, schedule,
               schedule_c, uniform_prior, sigma, seed, threads):
    """Generate molecules: K from the training histogram, then joint flow sampling."""
    vdir = Path(vocab_dir)
    vocab, frames, _ = _load_vocab_dir(vdir)
    data = training_examples(vocab, frames)
    if not data:
        raise click.ClickException("no training molecules with frames")
    knobs = _parse_knobs(temperature, eta=eta, uniform_prior=uniform_prior)
    sched = RotSchedule("constant" if schedule == "linear" else "exponential", schedule_c)
    counts = [len(ex.tokens) for ex in data]
    inputs = {str(vdir / n): sha256_file(vdir / n) for n in ("vocab.json", "frames.json")}
    if denoiser == "checkpoint":
        if not checkpoint:
            raise click.UsageError("--denoiser checkpoint needs --checkpoint")
        model = ToyModel.load(checkpoint)
        if model.n_classes != len(vocab):
            raise click.ClickException(f"checkpoint has {model.n_classes} classes, vocabulary {len(vocab)}")
        inputs[str(checkpoint)] = sha256_file(checkpoint)
        make = lambda K: model  # noqa: E731
    else:
        def make(K):
            sub = [ex for ex in data if len(ex.tokens) == K]
            return OracleDenoiser(np.stack([ex.tokens for ex in sub]), np.stack([ex.rots for ex in sub]),
                                  np.stack([ex.trans for ex in sub]), len(vocab), sigma=sigma)
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n_samples)
    seeds = [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]
    Ks = [int(draw_motif_counts(counts, 1, np.random.default_rng(c.spawn(1)[0]))[0]) for c in children]
    denoisers = {K: make(K) for K in sorted(set(Ks))}
    job = _SampleJob(denoisers, vocab, steps, knobs, sched)
    results = _pmap(job, list(zip(range(n_samples), seeds, Ks)), threads)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    mols = [g for g, _ in results]
    _write(out, "samples.sdf", write_sdf(mols))
    _write(out, "sample_log.csv", _csv_text(
        ["index", "seed", "K", "n_atoms", "motif_tokens"],
        [(i, s, K, len(g.atoms), g.props["motif_tokens"]) for i, (s, K, g) in enumerate(zip(seeds, Ks, mols))]))
    traj = [(i, r["step"], repr(r["t"]), r["masked"]) for i, (_, tr) in enumerate(results) for r in tr]
    _write(out, "trajectory.csv", _csv_text(["index", "step", "t", "masked"], traj))
    conf = {"denoiser": denoiser, "n": n_samples, "steps": steps, "temperature": temperature, "eta": eta,
            "schedule": schedule, "schedule_c": schedule_c, "uniform_prior": uniform_prior, "sigma": sigma,
            "seed": seed}
    write_manifest(out, "sample", conf, inputs, ["samples.sdf", "sample_log.csv", "trajectory.csv"])
    click.echo(f"wrote {n_samples} molecules to {out / 'samples.sdf'}")


# --------------------------------------------------------------------------- eval


def _tokens_of(g, vocab: Vocabulary | None, cfg: FragmentationConfig | None):
    if "motif_tokens" in g.props:
        return [int(k) for k in g.props["motif_tokens"].split()]
    if vocab is None or cfg is None:
        return None
    fm = fragment_with_vocabulary(g, cfg, set(vocab._index))
    if fm.skipped is not None:
        return None
    return [vocab._index.get(m.key, 0) for m in fm.motifs]


@main.command("eval")
@click.option("--samples", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--reference", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", required=True, type=click.Path(file_okay=False))
@click.option("--vocab-dir", type=click.Path(exists=True, file_okay=False),
              help="Training vocabulary; enables motif-frequency ratios.")
@click.option("--alpha", default=0.1, show_default=True, type=float,
              help="Percent cutoff separating common from uncommon motif classes.")
def cmd_eval(samples, reference, output_dir, vocab_dir, alpha):
    """Structure metrics of sampled molecules against a reference set."""
    sampled, dig_s = _read_inputs([samples])
    ref, dig_r = _read_inputs([reference])
    table, valency = BondTable.default(), ValencyTable.default()
    report = evaluate(sampled, ref, table, valency)
    inputs = {**dig_s, **dig_r}
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    if vocab_dir:
        vdir = Path(vocab_dir)
        vocab, frames, frag = _load_vocab_dir(vdir)
        cfg = FragmentationConfig(**{**frag, "strategy": Strategy(frag["strategy"])}) if frag else None
        toks = [_tokens_of(g, vocab, cfg) for g in sampled]
        toks = [t for t in toks if t is not None]
        n_train = sum(f is not None for f in frames)
        counts = vocab.counts()
        report.common_ratio, report.uncommon_ratio = motif_frequency_ratios(toks, len(toks), counts, n_train, alpha)
        sampled_rate = np.zeros(len(vocab))
        for t in toks:
            for k in t:
                if k:
                    sampled_rate[k - 1] += 1
        sampled_rate /= max(len(toks), 1)
        train_rate = counts / max(n_train, 1)
        rows = []
        for k, d in enumerate(vocab.entries):
            ratio = sampled_rate[k] / train_rate[k] if train_rate[k] > 0 else float("nan")
            rows.append([k + 1, formula(d.graph()), int(d.count), repr(float(train_rate[k])),
                         repr(float(sampled_rate[k])), repr(float(ratio))])
        outputs.append(_write(out, "motif_ratios.csv", _csv_text(
            ["token", "formula", "train_count", "train_per_molecule", "sampled_per_molecule", "ratio"], rows)))
        nm = sum(len(t) for t in toks)
        if nm:
            report.compression_all_atom = sum(len(g.atoms) for g in sampled) / nm
            report.compression_heavy_atom = sum(sum(g.is_heavy(i) for i in range(len(g.atoms)))
                                                for g in sampled) / nm
        inputs.update({str(vdir / n): sha256_file(vdir / n) for n in ("vocab.json", "frames.json")})
    outputs.insert(0, _write(out, "metrics.csv", report.to_csv()))
    write_manifest(out, "eval", {"alpha": alpha, "vocab_dir": bool(vocab_dir),
                                 "bond_table": table.provenance}, inputs, outputs)
    click.echo(report.to_csv(), nl=False)


# --------------------------------------------------------------------------- stats


@main.command("stats")
@click.option("--input", "inputs", multiple=True, required=True, type=click.Path(dir_okay=False))
@click.option("--output-dir", required=True, type=click.Path(file_okay=False))
@click.option("--alphas", default="0.5,0.1,0.01", show_default=True,
              help="Comma-separated PlanarRings thresholds (percent).")
@click.option("--planarity-tol", default=0.1, show_default=True, type=float)
@click.option("--alpha-basis", default="records", show_default=True, type=click.Choice(["records", "molecules"]))
@click.option("--collinear-tol", default=1e-3, show_default=True, type=float)
@click.option("--aromaticity/--no-aromaticity", default=True, show_default=True)
@_threads
def cmd_stats(inputs, output_dir, alphas, planarity_tol, alpha_basis, collinear_tol, aromaticity, threads):
    """Fragmentation statistics: NoRings against PlanarRings at several thresholds."""
    mols, digests = _read_inputs(inputs)
    alist = _parse_floats(alphas)
    cfgs = [_frag_config(0.0, "NoRings", planarity_tol, alpha_basis, collinear_tol, aromaticity)]
    cfgs += [_frag_config(a, "PlanarRings", planarity_tol, alpha_basis, collinear_tol, aromaticity) for a in alist]
    stats, comp = [], []
    for cfg in cfgs:
        ds = fragment_parallel(mols, cfg, threads)
        stats.append(fragmentation_stats(ds, cfg))
        comp.append(compression_stats(ds))
    rows = []
    for st, c in zip(stats, comp):
        r = st.row()
        r["compression_all_atom"] = f"{c['all_atom']:.4f}"
        r["compression_heavy_atom"] = f"{c['heavy_atom']:.4f}"
        rows.append(r)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    _write(out, "fragmentation_stats.csv", buf.getvalue())
    write_manifest(out, "stats", {"alphas": alist, "planarity_tol": planarity_tol, "alpha_basis": alpha_basis,
                                  "collinear_tol": collinear_tol, "aromaticity": aromaticity}, digests,
                   ["fragmentation_stats.csv"])
    click.echo(buf.getvalue(), nl=False)


if __name__ == "__main__":  # pragma: no cover
    main()
