"""Sequential networks with an explicit activation tape."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..exceptions import ConsistencyError, DimensionError, NumericError
from .layers import KERNELS, LayerSpec, batchnorm_stat_updates, init_params, output_shape

TRAIN = "train"
INFER = "infer"

_ids = itertools.count()


@dataclass
class Tape:
    """Everything :meth:`Network.backward` needs from one forward call."""

    network_id: int
    version: int
    caches: list
    input_shape: tuple
    output_shape: tuple
    train: bool
    stop: int
    # layer index -> batch-norm running statistics implied by this pass
    stats: dict


class Network:
    """An ordered stack of layers plus its parameters and batch-norm buffers.

    ``params[i]`` and ``buffers[i]`` are dicts of float64 arrays for layer
    ``i``.  Forward and backward never mutate either; parameter updates go
    through the optimizer (which bumps :attr:`version`) and running statistics
    through :meth:`commit_statistics`.
    """

    def __init__(self, specs: Sequence[LayerSpec], input_shape, params=None, buffers=None, seed=None):
        self.specs: List[LayerSpec] = list(specs)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.shapes = [self.input_shape]
        for i, spec in enumerate(self.specs):
            try:
                self.shapes.append(output_shape(spec, self.shapes[-1]))
            except DimensionError as exc:
                raise DimensionError(f"layer {i} ({spec.kind}): {exc}") from None
        if params is None:
            rng = np.random.default_rng(seed)
            fresh = [init_params(s, rng) for s in self.specs]
            params = [p for p, _ in fresh]
            if buffers is None:
                buffers = [b for _, b in fresh]
        if buffers is None:
            buffers = [init_params(s, np.random.default_rng(0))[1] for s in self.specs]
        self.params = [{k: np.array(v, dtype=np.float64) for k, v in p.items()} for p in params]
        self.buffers = [{k: np.array(v, dtype=np.float64) for k, v in b.items()} for b in buffers]
        self._check_param_shapes()
        self.id = next(_ids)
        self.version = 0

    def _check_param_shapes(self):
        if len(self.params) != len(self.specs) or len(self.buffers) != len(self.specs):
            raise DimensionError("parameter list length does not match layer count")
        ref_rng = np.random.default_rng(0)
        for i, spec in enumerate(self.specs):
            ref_p, ref_b = init_params(spec, ref_rng)
            for got, ref in ((self.params[i], ref_p), (self.buffers[i], ref_b)):
                if set(got) != set(ref) or any(got[k].shape != ref[k].shape for k in ref):
                    raise DimensionError(f"layer {i} ({spec.kind}) has mismatched parameter shapes")

    @property
    def output_shape(self):
        return self.shapes[-1]

    @property
    def n_params(self) -> int:
        return sum(v.size for p in self.params for v in p.values())

    def penultimate_index(self) -> int:
        """Index of the final dense layer; its input is the feature encoding."""
        for i in range(len(self.specs) - 1, -1, -1):
            if self.specs[i].kind == "dense":
                return i
        raise DimensionError("network has no dense layer")

    def copy(self) -> "Network":
        return Network(self.specs, self.input_shape, params=self.params, buffers=self.buffers)

    def forward(self, x, mode: str = INFER, stop: Optional[int] = None):
        """Run layers ``[0, stop)`` (all by default); returns ``(output, tape)``."""
        if mode not in (TRAIN, INFER):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise DimensionError(f"input shape {x.shape[1:]} does not match network input {self.input_shape}")
        stop = len(self.specs) if stop is None else stop
        train = mode == TRAIN
        caches, stats = [], {}
        h = x
        for i in range(stop):
            spec = self.specs[i]
            h, cache = KERNELS[spec.kind][0](h, self.params[i], self.buffers[i], spec, train)
            if not np.all(np.isfinite(h)):
                raise NumericError(f"non-finite activation at layer {i} ({spec.kind})")
            caches.append(cache)
            if train and spec.kind == "batchnorm":
                stats[i] = batchnorm_stat_updates(cache)
        tape = Tape(self.id, self.version, caches, x.shape, h.shape, train, stop, stats)
        return h, tape

    def backward(self, tape: Tape, grad_output):
        """Gradients of a scalar loss given ``dL/d output``.

        Returns ``(param_grads, input_grad)`` where ``param_grads[i]`` mirrors
        ``params[i]``.
        """
        if tape.network_id != self.id or tape.version != self.version:
            raise ConsistencyError("tape was recorded for different or since-updated parameters")
        g = np.asarray(grad_output, dtype=np.float64)
        if g.shape != tape.output_shape:
            raise DimensionError(f"output gradient shape {g.shape} != output shape {tape.output_shape}")
        grads = [{k: np.zeros_like(v) for k, v in p.items()} for p in self.params]
        for i in range(tape.stop - 1, -1, -1):
            spec = self.specs[i]
            g, dp = KERNELS[spec.kind][1](tape.caches[i], g, self.params[i], spec)
            grads[i].update(dp)
        return grads, g

    def commit_statistics(self, tape: Tape):
        """Fold the batch statistics of a train-mode pass into the running averages."""
        for i, stats in tape.stats.items():
            self.buffers[i] = {k: np.array(v) for k, v in stats.items()}

    def predict(self, x, batch_size: int = 256):
        """Infer-mode output, evaluated in fixed-size chunks."""
        x = np.asarray(x, dtype=np.float64)
        outs = [self.forward(x[i : i + batch_size], INFER)[0] for i in range(0, len(x), batch_size)]
        if not outs:
            return np.zeros((0,) + self.output_shape)
        return np.concatenate(outs)

    def encode(self, x):
        """Infer-mode activations entering the final dense layer, flattened.

        Samples are pushed through one at a time so each vector is bitwise
        independent of whatever else is in ``x``.
        """
        x = np.asarray(x, dtype=np.float64)
        stop = self.penultimate_index()
        width = int(np.prod(self.shapes[stop]))
        out = np.zeros((len(x), width))
        for i in range(len(x)):
            out[i] = self.forward(x[i : i + 1], INFER, stop=stop)[0].reshape(-1)
        return out

    def to_config(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": [s.to_dict() for s in self.specs]}

    @classmethod
    def from_config(cls, config: dict, params=None, buffers=None, seed=None) -> "Network":
        specs = [LayerSpec.from_dict(d) for d in config["layers"]]
        return cls(specs, config["input_shape"], params=params, buffers=buffers, seed=seed)


def forward(net: Network, x, mode: str = INFER):
    return net.forward(x, mode)


def backward(net: Network, tape: Tape, grad_output):
    return net.backward(tape, grad_output)
