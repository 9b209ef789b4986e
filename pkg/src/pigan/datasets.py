"""Synthetic data with known structure, the PIGANDS1 format and PGM ingestion."""
from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy.stats import norm

from .divergence import DiscreteDistribution
from .exceptions import CoverageError, DomainError, FormatError, PiganError
from .pgm import read_pgm

log = logging.getLogger(__name__)

BACKGROUND = "background"
EVALUATION = "evaluation"
_SPLITS = (BACKGROUND, EVALUATION)


class EmptyDatasetError(PiganError, ValueError):
    pass


# ---------------------------------------------------------------- mixtures


@dataclass(frozen=True)
class Component:
    mean: Tuple[float, float]
    sigma: float
    weight: float = 1.0


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic 2-D Gaussian mixture; weights are normalised on construction."""

    components: Tuple[Component, ...]

    def __post_init__(self):
        comps = tuple(c if isinstance(c, Component) else Component(**c) for c in self.components)
        if not comps:
            raise DomainError("a mixture needs at least one component")
        if any(c.sigma <= 0 or c.weight <= 0 for c in comps):
            raise DomainError("sigmas and weights must be positive")
        total = sum(c.weight for c in comps)
        comps = tuple(Component(tuple(map(float, c.mean)), float(c.sigma), c.weight / total) for c in comps)
        object.__setattr__(self, "components", comps)

    @classmethod
    def ring(cls, n_modes: int = 8, radius: float = 5.0, sigma: float = 0.25) -> "MixtureSpec":
        angles = 2 * np.pi * np.arange(n_modes) / n_modes
        return cls(tuple(Component((radius * math.cos(a), radius * math.sin(a)), sigma) for a in angles))

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([c.sigma for c in self.components])

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def density(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        d2 = ((pts[:, None, :] - self.means[None]) ** 2).sum(-1)
        s2 = self.sigmas**2
        return (self.weights / (2 * np.pi * s2) * np.exp(-0.5 * d2 / s2)).sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "type": "mixture",
            "components": [
                {"mean": list(c.mean), "sigma": c.sigma, "weight": c.weight} for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        if d.get("preset") == "ring":
            return cls.ring(d.get("n_modes", 8), d.get("radius", 5.0), d.get("sigma", 0.25))
        return cls(tuple(Component(tuple(c["mean"]), c["sigma"], c.get("weight", 1.0)) for c in d["components"]))


def sample_gaussian_mixture(spec: MixtureSpec, count: int, rng, return_components: bool = False):
    """i.i.d. draws: a component by weight, then an isotropic Gaussian around its mean."""
    if count < 1:
        raise DomainError("count must be at least 1")
    rng = np.random.default_rng(rng)
    comp = rng.choice(len(spec.components), size=count, p=spec.weights)
    noise = rng.standard_normal((count, 2))
    x = spec.means[comp] + noise * spec.sigmas[comp, None]
    return (x, comp) if return_components else x


def mixture_grid_density(spec: MixtureSpec, bounds, resolution: int, min_coverage: float = 0.999) -> DiscreteDistribution:
    """Mixture density at the centres of a ``resolution`` x ``resolution`` grid, normalised.

    ``bounds`` is ``(xmin, xmax, ymin, ymax)``.  Cells are flattened row-major
    with y along rows.  The rectangle must hold at least ``min_coverage`` of
    the mixture mass, computed exactly from per-axis normal CDFs.
    """
    g = int(resolution)
    if g < 2:
        raise DomainError("resolution must be at least 2")
    xmin, xmax, ymin, ymax = map(float, bounds)
    if not (xmin < xmax and ymin < ymax):
        raise DomainError("bounds must be increasing")
    m, s = spec.means, spec.sigmas
    inside_x = norm.cdf((xmax - m[:, 0]) / s) - norm.cdf((xmin - m[:, 0]) / s)
    inside_y = norm.cdf((ymax - m[:, 1]) / s) - norm.cdf((ymin - m[:, 1]) / s)
    coverage = float(np.sum(spec.weights * inside_x * inside_y))
    if coverage < min_coverage:
        raise CoverageError(f"bounds hold only {coverage:.6f} of the mixture mass")
    xc, yc = grid_centres(bounds, g)
    yy, xx = np.meshgrid(yc, xc, indexing="ij")
    dens = spec.density(np.column_stack([xx.ravel(), yy.ravel()]))
    return DiscreteDistribution.from_weights(dens)


def grid_centres(bounds, g):
    xmin, xmax, ymin, ymax = map(float, bounds)
    xe = np.linspace(xmin, xmax, g + 1)
    ye = np.linspace(ymin, ymax, g + 1)
    return 0.5 * (xe[:-1] + xe[1:]), 0.5 * (ye[:-1] + ye[1:])


# ---------------------------------------------------------------- datasets


@dataclass(eq=False)
class LabeledDataset:
    """Samples with integer class labels and optional alphabet (group) ids.

    ``samples`` are stored as float32 so the on-disk format round-trips
    exactly.  ``label_offset`` maps local labels to corpus-wide class ids,
    which keeps background and evaluation class sets disjoint.
    """

    samples: np.ndarray
    labels: np.ndarray
    groups: Optional[np.ndarray] = None
    split: str = BACKGROUND
    num_classes: Optional[int] = None
    label_offset: int = 0

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int32).ravel()
        if self.groups is not None:
            self.groups = np.asarray(self.groups, dtype=np.int32).ravel()
        n = len(self.samples)
        if self.samples.ndim < 2 and n:
            raise DomainError("samples need a leading count axis")
        if len(self.labels) != n or (self.groups is not None and len(self.groups) != n):
            raise DomainError("labels and groups must have one entry per sample")
        if self.num_classes is None:
            self.num_classes = int(self.labels.max()) + 1 if n else 0
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DomainError(f"labels must lie in [0, {self.num_classes})")
        if self.split not in _SPLITS:
            raise DomainError(f"split must be one of {_SPLITS}")
        if self.samples.ndim == 4 and n and (self.samples.min() < 0 or self.samples.max() > 1):
            raise DomainError("pixel values must lie in [0, 1]")

    def __len__(self):
        return len(self.samples)

    @property
    def sample_shape(self):
        return tuple(self.samples.shape[1:])

    @property
    def class_ids(self) -> np.ndarray:
        return self.labels.astype(np.int64) + self.label_offset

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        same_groups = (self.groups is None and other.groups is None) or (
            self.groups is not None and other.groups is not None and np.array_equal(self.groups, other.groups)
        )
        return (
            self.samples.shape == other.samples.shape
            and np.array_equal(self.samples, other.samples)
            and np.array_equal(self.labels, other.labels)
            and same_groups
            and self.split == other.split
            and self.num_classes == other.num_classes
            and self.label_offset == other.label_offset
        )

    def subset(self, mask) -> "LabeledDataset":
        return LabeledDataset(
            self.samples[mask],
            self.labels[mask],
            None if self.groups is None else self.groups[mask],
            self.split,
            self.num_classes,
            self.label_offset,
        )

    def summary(self) -> dict:
        hist = np.bincount(self.labels, minlength=self.num_classes) if len(self) else np.zeros(0, int)
        return {
            "count": len(self),
            "sample_shape": list(self.sample_shape),
            "num_classes": self.num_classes,
            "split": self.split,
            "label_offset": self.label_offset,
            "groups": None if self.groups is None else int(len(np.unique(self.groups))),
            "class_histogram": hist.tolist(),
        }


# ---------------------------------------------------------------- PIGANDS1

DS_MAGIC = b"PIGANDS1"
_DS_HEAD = struct.Struct("<8sBBHIII")


def save_dataset(ds: LabeledDataset, path):
    """Write PIGANDS1.

    Layout (little-endian): magic ``PIGANDS1``; uint8 split (0 background,
    1 evaluation); uint8 has_groups; uint16 ndim; uint32 count; uint32
    num_classes; uint32 label_offset; ndim x uint32 per-sample dims; float32
    pixels; int32 labels; int32 groups if present.
    """
    dims = ds.sample_shape if len(ds) else tuple(ds.samples.shape[1:])
    with open(path, "wb") as fh:
        fh.write(
            _DS_HEAD.pack(
                DS_MAGIC,
                _SPLITS.index(ds.split),
                ds.groups is not None,
                len(dims),
                len(ds),
                ds.num_classes,
                ds.label_offset,
            )
        )
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        fh.write(ds.samples.astype("<f4").tobytes())
        fh.write(ds.labels.astype("<i4").tobytes())
        if ds.groups is not None:
            fh.write(ds.groups.astype("<i4").tobytes())
    return Path(path)


def load_dataset(path) -> LabeledDataset:
    data = Path(path).read_bytes()
    if len(data) < _DS_HEAD.size:
        raise FormatError("file too short for a dataset header", len(data))
    magic, split, has_groups, ndim, count, num_classes, offset_ = _DS_HEAD.unpack_from(data, 0)
    if magic != DS_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if split >= len(_SPLITS):
        raise FormatError(f"unknown split code {split}", 8)
    pos = _DS_HEAD.size

    def take(nbytes, what):
        nonlocal pos
        if pos + nbytes > len(data):
            raise FormatError(f"{what} truncated", pos)
        chunk = data[pos : pos + nbytes]
        pos += nbytes
        return chunk

    dims = struct.unpack(f"<{ndim}I", take(4 * ndim, "dims"))
    per = int(np.prod(dims)) if dims else 1
    samples = np.frombuffer(take(4 * per * count, "pixels"), dtype="<f4").reshape((count,) + dims)
    labels = np.frombuffer(take(4 * count, "labels"), dtype="<i4")
    groups = np.frombuffer(take(4 * count, "groups"), dtype="<i4") if has_groups else None
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes", pos)
    return LabeledDataset(
        samples.astype(np.float32),
        labels.astype(np.int32),
        None if groups is None else groups.astype(np.int32),
        _SPLITS[split],
        num_classes,
        offset_,
    )


# ---------------------------------------------------------------- glyphs


@dataclass(frozen=True)
class GlyphSpec:
    class_count: int = 40
    examples_per_class: int = 20
    image_size: int = 16
    strokes: Tuple[int, int] = (2, 4)
    thickness: float = 1.2
    jitter: float = 2.5
    classes_per_alphabet: int = 5
    evaluation_class_count: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strokes", tuple(self.strokes))
        if min(self.class_count, self.examples_per_class, self.image_size, self.classes_per_alphabet) < 1:
            raise DomainError("glyph counts and sizes must be positive")
        if self.evaluation_class_count < 0:
            raise DomainError("evaluation_class_count must be non-negative")
        lo, hi = self.strokes
        if not 1 <= lo <= hi:
            raise DomainError("stroke range must satisfy 1 <= lo <= hi")
        if self.thickness <= 0 or self.jitter < 0:
            raise DomainError("thickness must be positive and jitter non-negative")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["strokes"] = list(self.strokes)
        return dict(d, type="glyphs")

    @classmethod
    def from_dict(cls, d: dict) -> "GlyphSpec":
        d = {k: v for k, v in d.items() if k != "type"}
        return cls(**d)


def _random_stroke(rng):
    # a polyline of 2-3 segments inside the central part of the canvas
    n = rng.integers(3, 5)
    start = rng.uniform(0.2, 0.8, 2)
    steps = rng.normal(0, 0.25, (n - 1, 2))
    pts = np.clip(np.vstack([start, start + np.cumsum(steps, axis=0)]), 0.12, 0.88)
    return pts


def _render(strokes: List[np.ndarray], size: int, thickness: float) -> np.ndarray:
    c = (np.arange(size) + 0.5) / size
    yy, xx = np.meshgrid(c, c, indexing="ij")
    pix = np.column_stack([xx.ravel(), yy.ravel()])
    segs = np.concatenate([np.stack([s[:-1], s[1:]], axis=1) for s in strokes])
    a, b = segs[:, 0], segs[:, 1]
    ab = b - a
    denom = np.maximum((ab**2).sum(-1), 1e-12)
    t = np.clip(((pix[:, None, :] - a[None]) * ab[None]).sum(-1) / denom, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    dist = np.sqrt(((pix[:, None, :] - closest) ** 2).sum(-1)).min(axis=1) * size
    img = np.clip(thickness / 2 + 0.5 - dist, 0.0, 1.0)
    return img.reshape(size, size)


def _perturb(strokes, rng, jitter):
    if jitter == 0:
        return strokes
    angle = rng.normal(0, 0.08 * jitter)
    scale = 1 + rng.normal(0, 0.05 * jitter)
    shift = rng.normal(0, 0.03 * jitter, 2)
    rot = scale * np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    out = []
    for s in strokes:
        pts = s + rng.normal(0, 0.025 * jitter, s.shape)
        out.append((pts - 0.5) @ rot.T + 0.5 + shift)
    return out


def _glyph_split(spec: GlyphSpec, split: str) -> LabeledDataset:
    n_classes = spec.class_count if split == BACKGROUND else spec.evaluation_class_count
    offset = 0 if split == BACKGROUND else spec.class_count
    # separate streams so the two splits never share a prototype
    root = np.random.SeedSequence([spec.seed, _SPLITS.index(split)])
    proto_rng, noise_rng = (np.random.default_rng(s) for s in root.spawn(2))
    n_alpha = -(-n_classes // spec.classes_per_alphabet) if n_classes else 0
    radicals = [_random_stroke(proto_rng) for _ in range(n_alpha)]
    lo, hi = spec.strokes
    samples, labels, groups = [], [], []
    for cls in range(n_classes):
        alpha = cls // spec.classes_per_alphabet
        # the radical counts toward the stroke total; every class keeps at least one own stroke
        n_own = max(int(proto_rng.integers(lo, hi + 1)) - 1, 1)
        proto = [radicals[alpha]] + [_random_stroke(proto_rng) for _ in range(n_own)]
        for _ in range(spec.examples_per_class):
            samples.append(_render(_perturb(proto, noise_rng, spec.jitter), spec.image_size, spec.thickness))
            labels.append(cls)
            groups.append(alpha + (0 if split == BACKGROUND else -(-spec.class_count // spec.classes_per_alphabet)))
    arr = np.array(samples, dtype=np.float32).reshape(-1, 1, spec.image_size, spec.image_size)
    return LabeledDataset(arr, labels, groups, split, n_classes, offset)


def generate_glyph_dataset(spec: GlyphSpec = GlyphSpec(), split: str = BACKGROUND) -> LabeledDataset:
    """Stroke-based synthetic characters.

    Each class is a fixed set of random polyline strokes, one of which is a
    "radical" shared by every class of the same alphabet.  Examples are
    renderings after control-point noise and a small random affine map.
    The evaluation split uses its own classes and alphabets.
    """
    if split not in _SPLITS:
        raise DomainError(f"split must be one of {_SPLITS}")
    return _glyph_split(spec, split)


def generate_glyph_splits(spec: GlyphSpec = GlyphSpec()):
    return generate_glyph_dataset(spec, BACKGROUND), generate_glyph_dataset(spec, EVALUATION)


# ---------------------------------------------------------------- PGM ingestion


def resize_bilinear(img: np.ndarray, size: int) -> np.ndarray:
    """Corner-aligned bilinear resampling of a 2-D image to ``size`` x ``size``."""

    def weights(n_in, n_out):
        m = np.zeros((n_out, n_in))
        if n_in == 1 or n_out == 1:
            m[:, 0] = 1.0 if n_in == 1 else 0.0
            if n_in > 1:
                m[:, (n_in - 1) // 2] = 1.0
            return m
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
        lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
        frac = pos - lo
        m[np.arange(n_out), lo] = 1 - frac
        m[np.arange(n_out), lo + 1] += frac
        return m

    h, w = img.shape
    if (h, w) == (size, size):
        return img.astype(np.float64)
    return weights(h, size) @ img @ weights(w, size).T


def ingest_pgm_directory(path, image_size: int = 16, split: str = BACKGROUND) -> LabeledDataset:
    """One subdirectory per class (sorted by name); P5 files inside become samples.

    Pixels are divided by the file's maxval.  Files that are not P5 are
    skipped with a warning.
    """
    root = Path(path)
    if not root.is_dir():
        raise EmptyDatasetError(f"{root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    samples, labels = [], []
    for label, d in enumerate(class_dirs):
        for f in sorted(p for p in d.iterdir() if p.is_file()):
            try:
                raw, maxval = read_pgm(f)
            except FormatError as exc:
                log.warning("skipping %s: %s", f, exc)
                continue
            img = resize_bilinear(raw / maxval, image_size)
            samples.append(np.clip(img, 0.0, 1.0))
            labels.append(label)
    if not samples:
        raise EmptyDatasetError(f"no PGM images found under {root}")
    arr = np.array(samples).reshape(-1, 1, image_size, image_size)
    return LabeledDataset(arr, labels, None, split, len(class_dirs))
