"""Central finite-difference check of backpropagated gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..exceptions import DomainError
from .network import TRAIN

_KINKED = ("relu", "leaky_relu")
EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class ScalarLoss:
    """A scalar reduction of the network output and its gradient."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


def quadratic_loss() -> ScalarLoss:
    return ScalarLoss(lambda y: 0.5 * float(np.sum(y * y)), lambda y: y.copy())


def sum_loss() -> ScalarLoss:
    return ScalarLoss(lambda y: float(np.sum(y)), np.ones_like)


def weighted_sum_loss(shape, seed=0) -> ScalarLoss:
    """sum(w * y) with fixed N(0, 1) weights.

    Unlike a plain sum this has non-trivial gradients through batch norm.
    """
    w = np.random.default_rng(seed).normal(size=shape)
    return ScalarLoss(lambda y: float(np.sum(w * y)), lambda y: np.broadcast_to(w, y.shape).copy())


def relative_error(a, b, floor=1e-8):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@dataclass(frozen=True)
class GradcheckReport:
    max_error: float
    checked: int
    # entries whose +-h evaluations straddled a ReLU kink even at the smallest h
    skipped: int


def gradcheck_report(
    net,
    x,
    loss: ScalarLoss,
    h: float = 1e-5,
    mode: str = TRAIN,
    max_params: int = 10_000,
    sample_size: int = 1_000,
    check_input: bool = True,
    seed: int = 0,
    min_h: float = 1e-7,
    noise_scale: float = 1e6,
) -> GradcheckReport:
    """Compare backprop against central differences entry by entry.

    Every parameter entry is perturbed by +-h unless the network holds more
    than ``max_params`` entries, in which case ``sample_size`` entries are
    drawn at random.  Input entries are checked the same way when
    ``check_input`` is set.

    A central difference across a ReLU kink does not estimate the derivative,
    so when the +h and -h passes disagree on any ReLU mask the step is shrunk
    tenfold (down to ``min_h``); entries that still straddle a kink are
    counted in ``skipped`` rather than compared.

    A central difference cannot resolve gradients much smaller than its own
    round-off, about ``eps * |loss| / h``.  The relative error therefore uses
    ``max(|g_bp|, |g_fd|, noise_scale * eps * |loss| / h)`` as denominator:
    large gradients are compared relatively, and tiny ones in absolute terms
    at a level far below any real backprop mistake.
    """
    if not 1e-7 <= h <= 1e-3:
        raise DomainError(f"h must lie in [1e-7, 1e-3], got {h}")
    x = np.array(x, dtype=np.float64)
    out, tape = net.forward(x, mode)
    grads, gx = net.backward(tape, loss.grad(out))
    kinked = [i for i, s in enumerate(net.specs) if s.kind in _KINKED]

    def central(flat, j):
        step = h
        saved = flat[j]
        while True:
            # outputs may alias x, so reduce before the next perturbation
            flat[j] = saved + step
            y, t_up = net.forward(x, mode)
            up, masks_up = loss.value(y), [t_up.caches[i].copy() for i in kinked]
            flat[j] = saved - step
            y, t_down = net.forward(x, mode)
            down = loss.value(y)
            flat[j] = saved
            if all(np.array_equal(a, t_down.caches[i]) for a, i in zip(masks_up, kinked)):
                noise = EPS * max(abs(up), abs(down)) / step
                return (up - down) / (2 * step), max(1e-8, noise_scale * noise)
            if step / 10 < min_h * (1 - 1e-12):
                return None
            step /= 10

    rng = np.random.default_rng(seed)
    entries = [(i, k, j) for i, p in enumerate(net.params) for k, a in p.items() for j in range(a.size)]
    if len(entries) > max_params:
        pick = rng.choice(len(entries), size=sample_size, replace=False)
        entries = [entries[t] for t in sorted(pick)]

    worst, checked, skipped = 0.0, 0, 0
    for i, k, j in entries:
        res = central(net.params[i][k].reshape(-1), j)
        if res is None:
            skipped += 1
            continue
        checked += 1
        worst = max(worst, float(relative_error(grads[i][k].reshape(-1)[j], *res)))

    if check_input:
        flat_x = x.reshape(-1)
        idx = range(flat_x.size)
        if flat_x.size > sample_size:
            idx = sorted(rng.choice(flat_x.size, size=sample_size, replace=False))
        for j in idx:
            res = central(flat_x, j)
            if res is None:
                skipped += 1
                continue
            checked += 1
            worst = max(worst, float(relative_error(gx.reshape(-1)[j], *res)))
    return GradcheckReport(worst, checked, skipped)


def finite_difference_gradcheck(net, x, loss: ScalarLoss, h: float = 1e-5, **kwargs) -> float:
    """Maximum relative error |g_bp - g_fd| / max(|g_bp|, |g_fd|, floor); see :func:`gradcheck_report`."""
    return gradcheck_report(net, x, loss, h=h, **kwargs).max_error


def _layer_probes():
    from .layers import (
        batchnorm,
        conv,
        conv_stride1_upsample2,
        conv_stride2,
        dense,
        leaky_relu,
        relu,
        reshape,
        sigmoid,
        tanh,
    )

    return {
        "dense": ([dense(4, 3)], (4,)),
        "conv": ([conv(2, 3, 3)], (2, 5, 5)),
        "conv_stride2": ([conv_stride2(2, 3, 3)], (2, 6, 6)),
        "conv_stride1_upsample2": ([conv_stride1_upsample2(2, 3, 3)], (2, 3, 3)),
        "batchnorm_dense": ([batchnorm(4)], (4,)),
        "batchnorm_conv": ([batchnorm(2)], (2, 3, 3)),
        "relu": ([relu()], (6,)),
        "leaky_relu": ([leaky_relu(0.2)], (6,)),
        "sigmoid": ([sigmoid()], (6,)),
        "tanh": ([tanh()], (6,)),
        "reshape": ([reshape(12)], (3, 2, 2)),
    }


LAYER_PROBES = _layer_probes()
PRESET_PROBES = ("conv_generator", "conv_discriminator", "mlp_generator", "mlp_discriminator")


def check_layer_kind(name: str, batch: int = 5) -> GradcheckReport:
    """Gradcheck a one-layer network of the given probe kind in train mode."""
    from .network import Network

    specs, shape = LAYER_PROBES[name]
    net = Network(specs, shape, seed=0)
    x = np.random.default_rng(0).normal(size=(batch,) + shape)
    # loss weights use a different seed from the input so they are not equal to x
    return gradcheck_report(net, x, weighted_sum_loss((batch,) + net.output_shape, seed=7))


def check_preset(name: str, batch: int = 4, **kwargs) -> GradcheckReport:
    """Gradcheck one of the preset networks on random inputs in train mode."""
    from . import presets

    net = getattr(presets, name)(seed=0)
    rng = np.random.default_rng(1)
    if name.endswith("generator"):
        x = rng.random((batch,) + net.input_shape)
    elif name.startswith("conv"):
        x = rng.random((batch,) + net.input_shape)
    else:
        x = rng.normal(0, 3, (batch,) + net.input_shape)
    return gradcheck_report(net, x, weighted_sum_loss((batch,) + net.output_shape, seed=7), **kwargs)
