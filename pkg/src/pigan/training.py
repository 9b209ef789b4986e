"""Alternating adversarial training with the pi-weighted discriminator loss.

One outer iteration runs ``k`` discriminator updates, each on a fresh batch
of ``m`` prior draws and ``m`` data samples, followed by one generator
update with the non-saturating loss ``-(1/m) sum log D(G(z))``.

The printed algorithm this follows writes the generator update inside the
discriminator loop as well; that is read as a transcription slip, and the
inner loop here updates the discriminator parameters with the gradient of
the discriminator loss.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .divergence import check_pi
from .exceptions import ConfigError, DimensionError, DomainError, NumericError
from .nn.network import TRAIN, Network
from .nn.optim import OptimizerState, adam_step

log = logging.getLogger(__name__)

CLAMP = 1e-7
PRIORS = ("uniform_01",)


def default_k(pi: float) -> int:
    """3 discriminator steps for pi <= 0.5, 1 above (the large-pi runs need a weaker D)."""
    return 3 if pi <= 0.5 else 1


@dataclass
class GanConfig:
    pi: float = 0.5
    k: Optional[int] = None
    m: int = 128
    n: int = 32
    iterations: int = 2000
    learning_rate: float = 0.002
    seed: int = 0
    prior: str = "uniform_01"
    checkpoint_every: int = 500
    sample_every: int = 500

    def __post_init__(self):
        try:
            self.pi = check_pi(self.pi)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        if self.k is None:
            self.k = default_k(self.pi)
        for name in ("k", "m", "n"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
            setattr(self, name, int(getattr(self, name)))
        if int(self.iterations) < 0:
            raise ConfigError("iterations must be non-negative")
        self.iterations = int(self.iterations)
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.prior not in PRIORS:
            raise ConfigError(f"prior must be one of {PRIORS}")
        if self.checkpoint_every < 0 or self.sample_every < 0:
            raise ConfigError("cadences must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LossRecord:
    iteration: int
    j_d: float
    j_g: float


def sample_prior(n: int, m: int, rng) -> np.ndarray:
    """(m, n) latent draws, i.i.d. uniform on [0, 1)."""
    return rng.random((m, n))


def _check_open(d, name):
    d = np.asarray(d, dtype=np.float64).ravel()
    if np.any(d <= 0) or np.any(d >= 1):
        raise DomainError(f"{name} values must lie strictly inside (0, 1)")
    return d


def discriminator_loss(d_real, d_fake, pi) -> float:
    """-(1/2m) (pi sum log D(x) + (1 - pi) sum log(1 - D(G(z))))."""
    pi = check_pi(pi)
    d_real, d_fake = _check_open(d_real, "d_real"), _check_open(d_fake, "d_fake")
    if len(d_real) != len(d_fake):
        raise DimensionError("d_real and d_fake must have the same length")
    m = len(d_real)
    return -(pi * np.log(d_real).sum() + (1 - pi) * np.log1p(-d_fake).sum()) / (2 * m)


def discriminator_loss_unweighted(d_real, d_fake) -> float:
    """The original equal-weight loss with the same 1/(2m) normalisation."""
    d_real, d_fake = _check_open(d_real, "d_real"), _check_open(d_fake, "d_fake")
    m = len(d_real)
    return -(np.log(d_real).sum() + np.log1p(-d_fake).sum()) / (2 * m)


def generator_loss(d_fake) -> float:
    """-(1/m) sum log D(G(z)); pi does not enter here."""
    d_fake = _check_open(d_fake, "d_fake")
    return -np.log(d_fake).mean()


def _clamp(d):
    return np.clip(d, CLAMP, 1 - CLAMP)


class TrainingSink:
    """Receives training events. Subclass and override what you need."""

    def start(self, g: Network, d: Network, cfg: GanConfig):
        pass

    def record(self, rec: LossRecord):
        pass

    def checkpoint(self, iteration: int, state: "TrainingState"):
        pass

    def finish(self, state: "TrainingState"):
        pass


@dataclass
class TrainingState:
    generator: Network
    discriminator: Network
    g_opt: OptimizerState
    d_opt: OptimizerState
    config: GanConfig
    history: List[LossRecord] = field(default_factory=list)
    iteration: int = 0


def _data_sampler(data):
    """Normalise a dataset, array or ``f(m, rng)`` callable into a batch sampler."""
    if callable(data):
        return data, None
    samples = getattr(data, "samples", data)
    arr = np.asarray(samples, dtype=np.float64)
    if len(arr) == 0:
        raise DomainError("training data is empty")

    def draw(m, rng):
        return arr[rng.integers(0, len(arr), size=m)]

    return draw, len(arr)


def train(
    g: Network,
    d: Network,
    data,
    cfg: GanConfig,
    sinks: Sequence[TrainingSink] = (),
    state: Optional[TrainingState] = None,
) -> TrainingState:
    """Run ``cfg.iterations`` outer iterations; networks are updated in place.

    ``data`` is a :class:`~pigan.datasets.LabeledDataset`, an array of samples
    or a callable ``f(m, rng)`` returning a batch.  Batches are drawn uniformly
    with replacement.  Everything random comes from one generator seeded with
    ``cfg.seed``, so equal configs give identical loss series.
    """
    if g.input_shape != (cfg.n,):
        raise DimensionError(f"generator takes {g.input_shape}, latent dimension is {cfg.n}")
    if g.output_shape != d.input_shape:
        raise DimensionError(f"generator emits {g.output_shape}, discriminator takes {d.input_shape}")
    if d.output_shape != (1,):
        raise DimensionError("discriminator must output one probability per sample")
    draw, size = _data_sampler(data)
    if size is not None and size < cfg.m:
        log.info("dataset has %d samples < batch %d; sampling with replacement", size, cfg.m)
    probe = np.asarray(draw(1, np.random.default_rng(0)))
    if probe.shape[1:] != d.input_shape:
        raise DimensionError(f"data samples have shape {probe.shape[1:]}, discriminator takes {d.input_shape}")

    if state is None:
        state = TrainingState(
            g,
            d,
            OptimizerState.for_network(g, learning_rate=cfg.learning_rate),
            OptimizerState.for_network(d, learning_rate=cfg.learning_rate),
            cfg,
        )
    # a resumed run draws from its own stream, keyed by where it picks up
    rng = np.random.default_rng(cfg.seed if state.iteration == 0 else [cfg.seed, state.iteration])
    for sink in sinks:
        sink.start(g, d, cfg)

    for it in range(state.iteration, state.iteration + cfg.iterations):
        try:
            rec = _outer_iteration(it, g, d, draw, rng, cfg, state)
        except NumericError as exc:
            raise NumericError(f"iteration {it + 1}: {exc}") from exc
        state.history.append(rec)
        state.iteration = it + 1
        for sink in sinks:
            sink.record(rec)
        if cfg.checkpoint_every and state.iteration % cfg.checkpoint_every == 0:
            for sink in sinks:
                sink.checkpoint(state.iteration, state)

    for sink in sinks:
        sink.finish(state)
    return state


def discriminator_gradients(d: Network, real, fake, pi):
    """J_D and its parameter gradients for one real batch and one generated batch.

    Real and generated samples go through ``d`` as separate train-mode
    batches.  Returns ``(j_d, grads, real_tape)``; the real tape carries the
    batch statistics that are committed after the update.
    """
    m = len(real)
    out_r, tape_r = d.forward(real, TRAIN)
    out_f, tape_f = d.forward(fake, TRAIN)
    dr, df = _clamp(out_r), _clamp(out_f)
    j_d = discriminator_loss(dr, df, pi)
    # the clamp is treated as the identity in the backward pass
    gr, _ = d.backward(tape_r, -pi / (2 * m) / dr)
    gf, _ = d.backward(tape_f, (1 - pi) / (2 * m) / (1 - df))
    grads = [{k: a + gf[i][k] for k, a in layer.items()} for i, layer in enumerate(gr)]
    return j_d, grads, tape_r


def _outer_iteration(it, g, d, draw, rng, cfg, state):
    m, pi = cfg.m, cfg.pi
    j_ds = []
    for _ in range(cfg.k):
        z = sample_prior(cfg.n, m, rng)
        x = draw(m, rng)
        fake, _ = g.forward(z, TRAIN)
        j_d, grads, tape_r = discriminator_gradients(d, x, fake, pi)
        j_ds.append(j_d)
        _check_finite(it, "discriminator gradient", grads)
        adam_step(d, grads, state.d_opt)
        d.commit_statistics(tape_r)

    z = sample_prior(cfg.n, m, rng)
    fake, tape_g = g.forward(z, TRAIN)
    out_f, tape_f = d.forward(fake, TRAIN)
    df = _clamp(out_f)
    j_g = generator_loss(df)
    _, dx = d.backward(tape_f, -1.0 / (m * df))
    g_grads, _ = g.backward(tape_g, dx)
    _check_finite(it, "generator gradient", g_grads)
    adam_step(g, g_grads, state.g_opt)
    g.commit_statistics(tape_g)

    rec = LossRecord(it + 1, float(np.mean(j_ds)), float(j_g))
    if not (math.isfinite(rec.j_d) and math.isfinite(rec.j_g)):
        raise NumericError(f"non-finite loss: J_D={rec.j_d}, J_G={rec.j_g}")
    return rec


def _check_finite(it, what, grads):
    for layer in grads:
        for a in layer.values():
            if not np.all(np.isfinite(a)):
                raise NumericError(f"non-finite {what}")


def network_seeds(seed: int):
    """Initialisation seeds (generator, discriminator) derived from a run seed."""
    g, d = (int(np.random.SeedSequence([int(seed), i]).generate_state(1)[0]) for i in (1, 2))
    return g, d
