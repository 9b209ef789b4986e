"""Measurements on trained networks: retrieval, one-shot classification,
latent interpolation, nearest-neighbour overfit checks and 2-D mode metrics.

Feature vectors are plain rows of a float array; a sample's id is its row
index unless explicit ids are passed.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .datasets import MixtureSpec
from .divergence import DiscreteDistribution, kl_divergence
from .exceptions import DataError, DimensionError, DomainError, NumericError
from .nn.network import Network

SMOOTHING = 0.5
SLERP_MIN_ANGLE = 1e-6


def encode_features(d: Network, samples) -> np.ndarray:
    """(count, width) infer-mode activations entering the final dense layer of ``d``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.shape[1:] != d.input_shape:
        raise DimensionError(f"samples have shape {x.shape[1:]}, discriminator takes {d.input_shape}")
    feats = d.encode(x)
    if not np.all(np.isfinite(feats)):
        raise NumericError("non-finite feature values")
    return feats


def _unit_rows(a, what):
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    norms = np.linalg.norm(a, axis=1)
    if np.any(norms == 0):
        raise DomainError(f"cosine similarity is undefined for a zero {what} vector")
    return a / norms[:, None]


def cosine_similarity(u, v) -> float:
    u, v = np.asarray(u, dtype=np.float64).ravel(), np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DimensionError("vectors must have the same length")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DomainError("cosine similarity is undefined for a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


# ---------------------------------------------------------------- retrieval


@dataclass(frozen=True)
class RetrievalResult:
    query: int
    ids: np.ndarray
    scores: np.ndarray


def _rank(scores, ids, k):
    # descending score, ties by ascending id
    order = np.lexsort((ids, -scores))[:k]
    return ids[order], scores[order]


def retrieve_topk(query, corpus, k: int, query_id: Optional[int] = None, corpus_ids=None) -> RetrievalResult:
    """Top-``k`` corpus entries by cosine similarity to ``query``.

    The entry whose id equals ``query_id`` (if any) is removed first, so a
    query never retrieves itself.
    """
    corpus = np.atleast_2d(np.asarray(corpus, dtype=np.float64))
    ids = np.arange(len(corpus)) if corpus_ids is None else np.asarray(corpus_ids, dtype=np.int64)
    if len(ids) != len(corpus):
        raise DimensionError("corpus_ids must match the corpus length")
    if query_id is not None:
        keep = ids != query_id
        corpus, ids = corpus[keep], ids[keep]
    k = int(k)
    if k < 1 or k > len(corpus):
        raise ValueError(f"k={k} must lie in [1, {len(corpus)}] (corpus size after excluding the query)")
    q = _unit_rows(query, "query")[0]
    if q.shape[0] != corpus.shape[1]:
        raise DimensionError("query and corpus dimensions differ")
    scores = np.clip(_unit_rows(corpus, "corpus") @ q, -1.0, 1.0)
    top_ids, top_scores = _rank(scores, ids, k)
    return RetrievalResult(-1 if query_id is None else int(query_id), top_ids, top_scores)


def retrieve_all(features, k: int, groups=None) -> list:
    """Every row queried against all other rows.

    With ``groups`` the corpus of each query is restricted to rows of its own
    group (within-alphabet retrieval).
    """
    feats = _unit_rows(features, "feature")
    ids = np.arange(len(feats))
    sims = np.clip(feats @ feats.T, -1.0, 1.0)
    groups = None if groups is None else np.asarray(groups)
    out = []
    for i in ids:
        mask = ids != i
        if groups is not None:
            mask &= groups == groups[i]
        if k > mask.sum():
            raise ValueError(f"k={k} exceeds the {mask.sum()} candidates available to query {i}")
        top_ids, top_scores = _rank(sims[i, mask], ids[mask], k)
        out.append(RetrievalResult(int(i), top_ids, top_scores))
    return out


def accuracy_retrieval_curve(results: Sequence[RetrievalResult], labels, k: Optional[int] = None) -> np.ndarray:
    """curve[r-1] = mean over queries of the fraction of the top r results sharing the query's label."""
    if not results:
        raise ValueError("no retrieval results")
    k = min(len(r.ids) for r in results) if k is None else int(k)
    if any(len(r.ids) < k for r in results):
        raise ValueError(f"every query needs at least {k} ranked results")
    lookup = labels if isinstance(labels, dict) else dict(enumerate(np.asarray(labels).tolist()))
    ranks = np.arange(1, k + 1)
    curve = np.zeros(k)
    for r in results:
        try:
            own = lookup[r.query]
            hits = np.array([lookup[int(i)] == own for i in r.ids[:k]], dtype=np.float64)
        except KeyError as exc:
            raise DataError(f"no label for sample id {exc.args[0]}") from None
        curve += np.cumsum(hits) / ranks
    return curve / len(results)


# ---------------------------------------------------------------- one-shot


def _check_support(labels):
    labels = np.asarray(labels)
    if len(np.unique(labels)) != len(labels):
        raise ValueError("support must hold exactly one vector per class")
    return labels


def one_shot_nn(support, support_labels, queries, query_labels=None):
    """Label each query by its nearest support vector under cosine distance.

    Returns ``(predictions, accuracy)``; accuracy is ``None`` without
    ``query_labels``.  Ties go to the smallest class id.
    """
    labels = _check_support(support_labels)
    order = np.argsort(labels, kind="stable")
    s, labels = _unit_rows(support, "support")[order], labels[order]
    q = _unit_rows(queries, "query")
    dist = 1.0 - q @ s.T
    pred = labels[np.argmin(dist, axis=1)]
    return pred, _accuracy(pred, query_labels)


def _accuracy(pred, truth):
    if truth is None:
        return None
    truth = np.asarray(truth)
    if len(truth) != len(pred):
        raise DimensionError("one label per query is required")
    return float(np.mean(pred == truth)) if len(pred) else float("nan")


@dataclass
class LinearModel:
    weights: np.ndarray  # (classes, dims)
    bias: np.ndarray
    classes: np.ndarray
    normalize: bool = True
    offset: Optional[np.ndarray] = None  # support mean removed before scoring

    def scores(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.offset is not None:
            x = x - self.offset
        if self.normalize:
            x = _unit_rows(x, "query")
        return x @ self.weights.T + self.bias


def train_linear_classifier(
    support,
    support_labels,
    lam: float = 1e-3,
    steps: int = 500,
    step_size: float = 0.1,
    normalize: bool = True,
    center: bool = True,
):
    """One-vs-rest hinge-loss classifiers fitted by subgradient descent.

    Each class minimises ``lam/2 |w|^2 + mean_i max(0, 1 - y_i (w.x_i + b))``
    over the support set with step ``step_size / sqrt(t)``.  The bias is not
    regularised.

    With ``normalize`` (the default) every input row is scaled to unit length
    first, the same geometry the cosine nearest-neighbour rule sees.  Raw
    discriminator features are small (norms of a few hundredths), and the
    fixed step schedule barely moves the weights on them.

    With ``center`` (the default) the support mean is subtracted before
    normalising.  Discriminator features share a large common direction, so
    uncentred unit rows sit within a few degrees of each other and one
    example per class cannot reach the margin in the step budget.
    """
    labels = _check_support(support_labels)
    x = np.atleast_2d(np.asarray(support, dtype=np.float64))
    if not np.all(np.isfinite(x)):
        raise NumericError("support features must be finite")
    if len(labels) < 2:
        raise ValueError("a linear classifier needs at least 2 classes")
    offset = x.mean(axis=0) if center and len(x) > 1 else None
    if offset is not None:
        x = x - offset
    if normalize:
        x = _unit_rows(x, "support")
    order = np.argsort(labels, kind="stable")
    x, labels = x[order], labels[order]
    c, n = len(labels), len(x)
    y = np.where(np.eye(c, dtype=bool), 1.0, -1.0)  # y[class, sample]
    w, b = np.zeros((c, x.shape[1])), np.zeros(c)
    for t in range(1, steps + 1):
        margin = y * (w @ x.T + b[:, None])
        active = (margin < 1) * y  # (c, n)
        gw = lam * w - active @ x / n
        gb = -active.sum(axis=1) / n
        eta = step_size / math.sqrt(t)
        w -= eta * gw
        b -= eta * gb
    return LinearModel(w, b, labels, normalize, offset)


def classify(model: LinearModel, queries) -> np.ndarray:
    """argmax of the one-vs-rest scores; ties go to the smallest class id."""
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if not np.all(np.isfinite(q)):
        raise NumericError("query features must be finite")
    return model.classes[np.argmax(model.scores(q), axis=1)]


# ---------------------------------------------------------------- interpolation


def _endpoints(z1, z2, steps):
    z1, z2 = np.asarray(z1, dtype=np.float64).ravel(), np.asarray(z2, dtype=np.float64).ravel()
    if z1.shape != z2.shape:
        raise DimensionError("endpoints must have equal dimension")
    if int(steps) < 2:
        raise ValueError("steps must be at least 2")
    return z1, z2, np.linspace(0.0, 1.0, int(steps))


def lerp(z1, z2, steps: int) -> np.ndarray:
    """(steps, n) points z1 + t (z2 - z1), t = i / (steps - 1), endpoints exact."""
    z1, z2, ts = _endpoints(z1, z2, steps)
    out = z1[None] + ts[:, None] * (z2 - z1)[None]
    out[0], out[-1] = z1, z2
    return out


def slerp(z1, z2, steps: int) -> np.ndarray:
    """Spherical interpolation on the raw vectors; plain lerp when they are nearly parallel."""
    z1, z2, ts = _endpoints(z1, z2, steps)
    n1, n2 = np.linalg.norm(z1), np.linalg.norm(z2)
    if n1 == 0 or n2 == 0:
        raise DomainError("slerp is undefined for a zero vector")
    omega = math.acos(float(np.clip(z1 @ z2 / (n1 * n2), -1.0, 1.0)))
    if omega < SLERP_MIN_ANGLE:
        return lerp(z1, z2, steps)
    s = math.sin(omega)
    out = (np.sin((1 - ts) * omega) / s)[:, None] * z1 + (np.sin(ts * omega) / s)[:, None] * z2
    out[0], out[-1] = z1, z2
    return out


# ---------------------------------------------------------------- overfit check


def nearest_training_neighbor(generated, training, chunk: int = 64):
    """Exact pixelwise-L2 nearest training sample for every generated sample.

    Returns ``(indices, distances)``; ties go to the lower index.
    """
    g = np.asarray(generated, dtype=np.float64)
    t = np.asarray(training, dtype=np.float64)
    if len(t) == 0:
        raise ValueError("training set is empty")
    if g.shape[1:] != t.shape[1:]:
        raise DimensionError(f"sample shapes differ: {g.shape[1:]} vs {t.shape[1:]}")
    g, t = g.reshape(len(g), -1), t.reshape(len(t), -1)
    idx, dist = np.zeros(len(g), dtype=np.int64), np.zeros(len(g))
    for i in range(0, len(g), chunk):
        d2 = ((g[i : i + chunk, None, :] - t[None]) ** 2).sum(-1)
        j = np.argmin(d2, axis=1)
        idx[i : i + chunk] = j
        dist[i : i + chunk] = np.sqrt(d2[np.arange(len(j)), j])
    return idx, dist


# ---------------------------------------------------------------- 2-D mixtures


def mode_coverage(samples, spec: MixtureSpec, radius_sigmas: float = 3.0, min_fraction: float = 0.01):
    """(modes covered, high-quality fraction) for 2-D samples against a mixture.

    A mode is covered when at least ``min_fraction`` of the samples lie within
    ``radius_sigmas`` of its sigmas from its mean.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise DimensionError("mode coverage needs (count, 2) samples")
    if len(x) == 0:
        return 0, 0.0
    d = np.sqrt(((x[:, None, :] - spec.means[None]) ** 2).sum(-1))
    near = d <= radius_sigmas * spec.sigmas[None]
    covered = int(np.sum(near.mean(axis=0) >= min_fraction))
    return covered, float(near.any(axis=1).mean())


def smoothed_histogram(samples, bounds, g: int, alpha: float = SMOOTHING) -> DiscreteDistribution:
    """g x g histogram (rows along y) with ``alpha`` added to every cell, normalised.

    Samples outside ``bounds`` are dropped.
    """
    x = np.asarray(samples, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("no samples to histogram")
    xmin, xmax, ymin, ymax = map(float, bounds)
    h, _, _ = np.histogram2d(x[:, 1], x[:, 0], bins=int(g), range=[[ymin, ymax], [xmin, xmax]])
    h = h.ravel() + alpha
    return DiscreteDistribution(h / h.sum())


def empirical_kl_pair(samples_p, samples_q, bounds, g: int = 32):
    """(KL[P||Q], KL[Q||P]) between smoothed histograms of two sample sets."""
    hp = smoothed_histogram(samples_p, bounds, g)
    hq = smoothed_histogram(samples_q, bounds, g)
    return kl_divergence(hp, hq), kl_divergence(hq, hp)


# ---------------------------------------------------------------- CSV output


def _write_csv(path, header, rows):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def write_curve_csv(path, curve):
    return _write_csv(path, ["rank", "accuracy"], [(r, _fmt(a)) for r, a in enumerate(curve, start=1)])


def write_oneshot_csv(path, rows):
    """``rows`` are ``(method, accuracy)`` pairs."""
    return _write_csv(path, ["method", "accuracy"], [(m, _fmt(a)) for m, a in rows])


def write_divergence_pairs_csv(path, rows):
    """``rows`` are ``(pi, kl_pq, kl_qp, modes_covered, hq_fraction)`` tuples."""
    return _write_csv(path, ["pi", "kl_pq", "kl_qp", "modes_covered", "hq_fraction"], [tuple(map(_fmt, r)) for r in rows])
