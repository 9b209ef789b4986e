"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..exceptions import DimensionError, NumericError


@dataclass
class OptimizerState:
    learning_rate: float = 0.002
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[dict] = field(default_factory=list)
    v: List[dict] = field(default_factory=list)

    @classmethod
    def for_network(cls, net, **hyper) -> "OptimizerState":
        zeros = lambda: [{k: np.zeros_like(a) for k, a in p.items()} for p in net.params]
        return cls(m=zeros(), v=zeros(), **hyper)

    def hyper(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }


def adam_step(net, grads, state: OptimizerState):
    """Apply one Adam update to ``net.params`` in place.

    Returns ``(net.params, state)``.  Any tape recorded before the step is
    invalidated.
    """
    if len(grads) != len(net.params):
        raise DimensionError("gradient list does not match the network's layers")
    for i, g in enumerate(grads):
        for k, a in g.items():
            if a.shape != net.params[i][k].shape:
                raise DimensionError(f"gradient {i}.{k} has shape {a.shape}")
            if not np.all(np.isfinite(a)):
                raise NumericError(f"non-finite gradient for layer {i} parameter {k!r}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for i, g in enumerate(grads):
        for k, a in g.items():
            m = state.m[i][k]
            v = state.v[i][k]
            m *= b1
            m += (1.0 - b1) * a
            v *= b2
            v += (1.0 - b2) * a * a
            net.params[i][k] -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    net.version += 1
    return net.params, state
