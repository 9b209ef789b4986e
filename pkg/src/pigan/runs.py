"""File-level workflows behind the command line: training runs, evaluation
tasks, interpolation strips, divergence tables and dataset tooling.

Every function here takes plain paths and options, writes its outputs and
returns a small summary dict, so the same code paths are exercised by the
CLI and by the tests.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION, validate_run_config
from .datasets import (
    BACKGROUND,
    EVALUATION,
    GlyphSpec,
    LabeledDataset,
    MixtureSpec,
    generate_glyph_dataset,
    load_dataset,
    sample_gaussian_mixture,
)
from .divergence import DIVERGENCE_COLUMNS, divergence_table
from .evaluation import (
    accuracy_retrieval_curve,
    classify,
    empirical_kl_pair,
    encode_features,
    lerp,
    mode_coverage,
    nearest_training_neighbor,
    one_shot_nn,
    retrieve_all,
    slerp,
    smoothed_histogram,
    train_linear_classifier,
    write_curve_csv,
    write_divergence_pairs_csv,
    write_oneshot_csv,
)
from .exceptions import ConfigError, ConsistencyError, DimensionError, VersionError
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.presets import conv_discriminator, conv_generator, mlp_discriminator, mlp_generator
from .pgm import mosaic, write_pgm
from .training import GanConfig, TrainingSink, TrainingState, network_seeds, sample_prior, train

log = logging.getLogger(__name__)

GRID_SIDE = 6
IDENTITY_TOL = 1e-10


# ---------------------------------------------------------------- training runs


def resolve_data(data_doc: dict):
    """(training data, sample shape, default architecture) for a config ``data`` block."""
    kind = data_doc["type"]
    if kind == "mixture":
        spec = MixtureSpec.from_dict(data_doc)
        return (lambda m, rng: sample_gaussian_mixture(spec, m, rng)), (2,), "mlp"
    if kind == "glyphs":
        ds = generate_glyph_dataset(GlyphSpec.from_dict(data_doc), BACKGROUND)
        return ds, ds.sample_shape, "conv"
    ds = load_dataset(data_doc["path"])
    if len(ds) == 0:
        raise ConfigError(f"{data_doc['path']}: dataset is empty")
    return ds, ds.sample_shape, "conv" if len(ds.sample_shape) == 3 else "mlp"


def build_networks(architecture: str, sample_shape, latent_dim: int, seed: int):
    g_seed, d_seed = network_seeds(seed)
    if architecture == "mlp":
        if len(sample_shape) != 1:
            raise DimensionError(f"the mlp architecture needs flat samples, data has shape {sample_shape}")
        dims = sample_shape[0]
        return mlp_generator(latent_dim, out_dim=dims, seed=g_seed), mlp_discriminator(dims, seed=d_seed)
    if len(sample_shape) != 3 or sample_shape[0] != 1 or sample_shape[1] != sample_shape[2]:
        raise DimensionError(f"the conv architecture needs (1, s, s) images, data has shape {sample_shape}")
    s = sample_shape[1]
    return conv_generator(latent_dim, image_size=s, seed=g_seed), conv_discriminator(image_size=s, seed=d_seed)


def apply_overrides(doc: dict, pi=None, k=None, seed=None, iters=None, out=None) -> dict:
    doc = validate_run_config(doc)
    gan = doc.setdefault("gan", {})
    for key, value in (("pi", pi), ("k", k), ("seed", seed), ("iterations", iters)):
        if value is not None:
            gan[key] = value
    if out is not None:
        doc["out"] = str(out)
    return validate_run_config(doc)


def _format_loss(v: float) -> str:
    return repr(float(v))


class RunDirectorySink(TrainingSink):
    """Writes losses.csv, checkpoints and sample grids into a run directory."""

    def __init__(self, out: Path, doc: dict, architecture: str, append: bool = False):
        self.out, self.doc, self.architecture, self.append = out, doc, architecture, append
        self.fh = None
        self.checkpoints = []
        self.grids = []

    def start(self, g, d, cfg):
        self.g, self.cfg = g, cfg
        path = self.out / "losses.csv"
        # a resumed run continues the existing series
        resuming = self.append and path.exists()
        self.fh = open(path, "a" if resuming else "w", newline="")
        if not resuming:
            self.fh.write("iteration,j_d,j_g\n")
        # a fixed latent batch so successive grids are comparable
        self.z = sample_prior(cfg.n, GRID_SIDE * GRID_SIDE, np.random.default_rng([cfg.seed, 36]))

    def record(self, rec):
        self.fh.write(f"{rec.iteration},{_format_loss(rec.j_d)},{_format_loss(rec.j_g)}\n")
        if self.cfg.sample_every and rec.iteration % self.cfg.sample_every == 0:
            self.grids.append(write_samples(self.out / f"samples_{rec.iteration:06d}", self.g, self.z))

    def checkpoint(self, iteration, state):
        self.checkpoints.append(write_run_checkpoint(self.out, state, self.doc, self.architecture))

    def finish(self, state):
        self.fh.close()
        if state.iteration not in {int(p.stem.split("_")[1]) for p in self.checkpoints}:
            self.checkpoints.append(write_run_checkpoint(self.out, state, self.doc, self.architecture))


def write_run_checkpoint(out: Path, state: TrainingState, doc: dict, architecture: str) -> Path:
    meta = {
        "iteration": state.iteration,
        "config": doc,
        "architecture": architecture,
        "latent_dim": state.config.n,
        "pi": state.config.pi,
        "schema_version": SCHEMA_VERSION,
    }
    return save_checkpoint(
        out / f"ckpt_{state.iteration:06d}.ckpt",
        {"generator": state.generator, "discriminator": state.discriminator},
        {"generator": state.g_opt, "discriminator": state.d_opt},
        meta,
    )


def generate_each(g, z) -> np.ndarray:
    """Generator output for each latent row on its own (batch of one).

    Infer-mode outputs do not depend on the batch, but matrix products over
    different batch sizes may round differently; one row at a time keeps
    every image bitwise reproducible from its latent alone.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    return np.concatenate([g.predict(z[i : i + 1]) for i in range(len(z))]) if len(z) else np.zeros((0,) + g.output_shape)


def write_samples(stem: Path, g, z) -> Path:
    """A 6x6 PGM grid for image generators, or a CSV of points for 2-D ones."""
    x = generate_each(g, z)
    if x.ndim == 4:
        return write_pgm(stem.with_suffix(".pgm"), mosaic(x, GRID_SIDE))
    path = stem.with_suffix(".csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(x.shape[1])])
        w.writerows([[repr(float(v)) for v in row] for row in x])
    return path


def train_run(doc: dict, out=None, resume=None) -> dict:
    """Train from a validated run config; returns a summary of what was written."""
    doc = validate_run_config(doc)
    out = Path(out or doc.get("out") or "run")
    doc["out"] = str(out)
    data, shape, default_arch = resolve_data(doc["data"])
    arch = doc.get("model", {}).get("architecture", default_arch)
    cfg = GanConfig(**doc["gan"])
    doc["gan"] = cfg.to_dict()  # snapshot with defaults filled in
    g, d = build_networks(arch, shape, cfg.n, cfg.seed)
    state = None
    if resume is not None:
        state = _resume_state(resume, g, d, cfg)
        g, d = state.generator, state.discriminator
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    if cfg.iterations == 0:
        if state is None:
            state = TrainingState(g, d, *_fresh_optimizers(g, d, cfg), cfg)
        ckpt = write_run_checkpoint(out, state, doc, arch)
        return {"out": str(out), "iterations": 0, "checkpoints": [str(ckpt)], "grids": []}

    sink = RunDirectorySink(out, doc, arch, append=resume is not None)
    state = train(g, d, data, cfg, sinks=[sink], state=state)
    last = state.history[-1]
    return {
        "out": str(out),
        "iterations": state.iteration,
        "final_j_d": last.j_d,
        "final_j_g": last.j_g,
        "checkpoints": [str(p) for p in sink.checkpoints],
        "grids": [str(p) for p in sink.grids],
    }


def _fresh_optimizers(g, d, cfg):
    from .nn.optim import OptimizerState

    return (
        OptimizerState.for_network(g, learning_rate=cfg.learning_rate),
        OptimizerState.for_network(d, learning_rate=cfg.learning_rate),
    )


def _resume_state(path, g, d, cfg) -> TrainingState:
    ck = load_checkpoint(path)
    try:
        rg, rd = ck.networks["generator"], ck.networks["discriminator"]
    except KeyError:
        raise VersionError(f"{path}: not a training checkpoint") from None
    if ck.meta.get("schema_version") != SCHEMA_VERSION:
        raise VersionError(f"{path}: checkpoint schema {ck.meta.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    if rg.to_config() != g.to_config() or rd.to_config() != d.to_config():
        raise VersionError(f"{path}: checkpoint architecture does not match the run config")
    g_opt, d_opt = ck.optimizers["generator"], ck.optimizers["discriminator"]
    g_opt.learning_rate = d_opt.learning_rate = cfg.learning_rate
    state = TrainingState(rg, rd, g_opt, d_opt, cfg, iteration=int(ck.meta.get("iteration", 0)))
    return state


# ---------------------------------------------------------------- checkpoints for evaluation


def load_models(path):
    """(generator, discriminator, meta) from a run checkpoint."""
    ck = load_checkpoint(path)
    return ck.networks.get("generator"), ck.networks.get("discriminator"), ck.meta


def _need(net, what, path):
    if net is None:
        raise ConfigError(f"{path}: checkpoint holds no {what}")
    return net


def _check_shape(ds: LabeledDataset, net, what):
    if ds.sample_shape != net.input_shape and ds.sample_shape != net.output_shape:
        raise DimensionError(f"dataset samples have shape {ds.sample_shape}, {what} expects {net.input_shape}")


# ---------------------------------------------------------------- evaluation tasks


def eval_retrieval(checkpoint, dataset, out, k: int = 19, queries: int = 5, seed: int = 0, by_group: bool = False):
    _, d, _ = load_models(checkpoint)
    d = _need(d, "discriminator", checkpoint)
    ds = load_dataset(dataset)
    _check_shape(ds, d, "the discriminator")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    feats = encode_features(d, ds.samples)
    groups = ds.groups if by_group else None
    if by_group and groups is None:
        raise ConfigError(f"{dataset}: dataset has no group ids")
    available = min(np.sum(groups == gid) for gid in np.unique(groups)) - 1 if by_group else len(ds) - 1
    k = int(min(k, available))
    if k < 1:
        raise ConfigError("retrieval needs at least two samples per corpus")
    results = retrieve_all(feats, k, groups)
    curve = accuracy_retrieval_curve(results, ds.class_ids)
    write_curve_csv(out / "retrieval_curve.csv", curve)
    grids = []
    if ds.samples.ndim == 4:
        pick = np.random.default_rng(seed).choice(len(ds), size=min(queries, len(ds)), replace=False)
        for q in sorted(pick.tolist()):
            tiles = np.concatenate([ds.samples[q : q + 1], ds.samples[results[q].ids[:9]]])
            grids.append(str(write_pgm(out / f"retrieval_query_{q:05d}.pgm", mosaic(tiles, len(tiles)))))
    n_classes = len(np.unique(ds.class_ids))
    return {"task": "retrieval", "k": k, "top1": float(curve[0]), "chance": 1.0 / n_classes, "grids": grids}


def one_shot_split(labels, seed: int):
    """One seeded support index per class (ascending class order) and the remaining query indices."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    support = np.array([rng.choice(np.flatnonzero(labels == c)) for c in np.unique(labels)], dtype=np.int64)
    queries = np.setdiff1d(np.arange(len(labels)), support)
    return support, queries


def one_shot_scores(feats, labels, seed: int = 0) -> dict:
    """Accuracy of cosine 1-NN and of the linear classifier from one example per class."""
    labels = np.asarray(labels)
    sup, qry = one_shot_split(labels, seed)
    if len(qry) == 0:
        raise ConfigError("one-shot evaluation needs at least one query beyond the support set")
    _, nn_acc = one_shot_nn(feats[sup], labels[sup], feats[qry], labels[qry])
    scores = {"nn": nn_acc}
    if len(sup) >= 2:
        model = train_linear_classifier(feats[sup], labels[sup])
        scores["linear"] = float(np.mean(classify(model, feats[qry]) == labels[qry]))
    else:
        log.warning("only one class: the linear classifier is skipped")
    return scores


def eval_oneshot(checkpoint, dataset, out, seed: int = 0):
    _, d, _ = load_models(checkpoint)
    d = _need(d, "discriminator", checkpoint)
    ds = load_dataset(dataset)
    _check_shape(ds, d, "the discriminator")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    feats = encode_features(d, ds.samples)
    scores = one_shot_scores(feats, ds.class_ids, seed)
    # the same protocol on raw pixels, for reference
    pixels = ds.samples.reshape(len(ds), -1).astype(np.float64)
    scores["pixel_nn"] = one_shot_scores(pixels, ds.class_ids, seed)["nn"]
    write_oneshot_csv(out / "oneshot.csv", list(scores.items()))
    n_classes = len(np.unique(ds.class_ids))
    return {"task": "oneshot", "chance": 1.0 / n_classes, **scores}


def mixture_bounds(spec: MixtureSpec, margin_sigmas: float = 8.0):
    lo = (spec.means - margin_sigmas * spec.sigmas[:, None]).min(axis=0)
    hi = (spec.means + margin_sigmas * spec.sigmas[:, None]).max(axis=0)
    return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])


def mode_metrics(samples, spec: MixtureSpec, seed: int = 0, g: int = 32, reference: int = 10_000):
    """Mode coverage plus both empirical KLs against fresh mixture draws."""
    ref = sample_gaussian_mixture(spec, reference, np.random.default_rng([seed, 1]))
    kl_pq, kl_qp = empirical_kl_pair(ref, samples, mixture_bounds(spec), g)
    covered, hq = mode_coverage(samples, spec)
    return {"kl_pq": kl_pq, "kl_qp": kl_qp, "modes_covered": covered, "hq_fraction": hq}


def eval_modes(out, mixture: dict, checkpoint=None, dataset=None, count: int = 10_000, seed: int = 0):
    spec = MixtureSpec.from_dict(mixture)
    pi = float("nan")
    if dataset is not None:
        ds = load_dataset(dataset)
        samples = ds.samples.astype(np.float64)
    elif checkpoint is not None:
        g, _, meta = load_models(checkpoint)
        g = _need(g, "generator", checkpoint)
        samples = g.predict(sample_prior(g.input_shape[0], count, np.random.default_rng(seed)))
        pi = float(meta.get("pi", pi))
    else:
        raise ConfigError("modes needs a checkpoint or a dataset of samples")
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise DimensionError(f"mode metrics need 2-D points, got samples of shape {samples.shape[1:]}")
    m = mode_metrics(samples, spec, seed)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_divergence_pairs_csv(out / "modes.csv", [(pi, m["kl_pq"], m["kl_qp"], m["modes_covered"], m["hq_fraction"])])
    return {"task": "modes", "pi": pi, **m}


def eval_overfit(checkpoint, dataset, out, count: int = 18, seed: int = 0):
    g, _, _ = load_models(checkpoint)
    g = _need(g, "generator", checkpoint)
    ds = load_dataset(dataset)
    if ds.sample_shape != g.output_shape:
        raise DimensionError(f"dataset samples have shape {ds.sample_shape}, the generator emits {g.output_shape}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    x = generate_each(g, sample_prior(g.input_shape[0], count, np.random.default_rng(seed)))
    idx, dist = nearest_training_neighbor(x, ds.samples)
    with open(out / "overfit.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "nearest_index", "distance"])
        w.writerows([(i, int(j), repr(float(dd))) for i, (j, dd) in enumerate(zip(idx, dist))])
    grids = []
    if x.ndim == 4:
        # generated image, then its nearest training image, three pairs per row
        pairs = np.stack([x[:, 0], ds.samples[idx, 0]], axis=1).reshape(-1, *x.shape[2:])
        grids.append(str(write_pgm(out / "overfit_pairs.pgm", mosaic(pairs, 6))))
    return {"task": "overfit", "mean_distance": float(dist.mean()), "min_distance": float(dist.min()), "grids": grids}


# ---------------------------------------------------------------- interpolation


def interpolate(checkpoint, out, mode: str = "lerp", steps: int = 9, seed: int = 0) -> dict:
    """Generate a strip along a latent path between two prior draws.

    Each tile is generated on its own, and the endpoints are checked to be
    bitwise equal to generating the two endpoint latents directly.
    """
    if int(steps) < 2:
        raise ValueError("steps must be at least 2")
    g, _, _ = load_models(checkpoint)
    g = _need(g, "generator", checkpoint)
    z1, z2 = sample_prior(g.input_shape[0], 2, np.random.default_rng(seed))
    modes = ("lerp", "slerp") if mode == "both" else (mode,)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    direct = generate_each(g, np.stack([z1, z2]))
    written = []
    for name in modes:
        path = (lerp if name == "lerp" else slerp)(z1, z2, steps)
        x = generate_each(g, path)
        if x[0].tobytes() != direct[0].tobytes() or x[-1].tobytes() != direct[1].tobytes():
            raise ConsistencyError(f"{name} endpoints differ from direct generation")
        with open(out / f"interp_{name}_latents.csv", "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows([[repr(float(v)) for v in row] for row in path])
        if x.ndim == 4:
            written.append(str(write_pgm(out / f"interp_{name}.pgm", mosaic(x, len(x)))))
        else:
            written.append(str(write_samples(out / f"interp_{name}", _Fixed(x), path)))
    return {"modes": list(modes), "steps": int(steps), "files": written}


class _Fixed:
    """Stands in for a generator whose outputs are already known."""

    def __init__(self, x):
        self.x, self.output_shape = x, x.shape[1:]

    def predict(self, z):
        return self.x[: len(z)]


# ---------------------------------------------------------------- divergence tables

DIVERGENCE_CSV_COLUMNS = DIVERGENCE_COLUMNS + ("flag",)


def divergence_rows(p, q, pis):
    """Rows of :func:`pigan.divergence.divergence_table` plus a ``flag`` column.

    ``flag`` names any directed KL that is infinite, so limit-regime rows are
    marked instead of aborting the table.
    """
    rows = divergence_table(p, q, pis)
    for r in rows:
        flags = [name for name in ("kl_pq", "kl_qp") if math.isinf(r[name])]
        r["flag"] = ";".join(f"{f}_infinite" for f in flags)
    return rows


def histogram_pair(samples_p, samples_q, g: int, bounds=None):
    """Smoothed histograms of two 2-D sample sets on a shared grid.

    Without ``bounds`` the grid spans both sets plus a 5% margin.
    """
    samples_p, samples_q = np.asarray(samples_p, float), np.asarray(samples_q, float)
    if bounds is None:
        both = np.concatenate([samples_p, samples_q])
        lo, hi = both.min(axis=0), both.max(axis=0)
        pad = 0.05 * np.maximum(hi - lo, 1e-12)
        bounds = (lo[0] - pad[0], hi[0] + pad[0], lo[1] - pad[1], hi[1] + pad[1])
    return smoothed_histogram(samples_p, bounds, g), smoothed_histogram(samples_q, bounds, g)


def write_divergence_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIVERGENCE_CSV_COLUMNS)
        for r in rows:
            w.writerow([r["flag"] if c == "flag" else repr(float(r[c])) for c in DIVERGENCE_CSV_COLUMNS])
    return Path(path)


def max_identity_residual(rows) -> float:
    return max(r["identity_residual"] for r in rows)


# ---------------------------------------------------------------- dataset tooling


def make_glyphs(out, spec: GlyphSpec, split: str = "both") -> list:
    out = Path(out)
    splits = (BACKGROUND, EVALUATION) if split == "both" else (split,)
    paths = []
    from .datasets import save_dataset

    for s in splits:
        target = out if len(splits) == 1 else out.with_name(f"{out.stem}_{s}{out.suffix or '.ds'}")
        target.parent.mkdir(parents=True, exist_ok=True)
        paths.append(save_dataset(generate_glyph_dataset(spec, s), target))
    return paths


def make_mixture(out, spec: MixtureSpec, count: int, seed: int) -> Path:
    from .datasets import save_dataset

    x, comp = sample_gaussian_mixture(spec, count, np.random.default_rng(seed), return_components=True)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    return save_dataset(LabeledDataset(x, comp, num_classes=len(spec.components)), out)
