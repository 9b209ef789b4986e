"""Layer kinds and their forward/backward kernels.

Every kernel is a pair ``forward(x, params, buffers, spec, train) -> (y, cache)``
and ``backward(cache, dy, params, spec) -> (dx, dparams)``.  Arrays are numpy
float64; images are ``(batch, channels, height, width)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import DimensionError, DomainError

KINDS = (
    "dense",
    "conv",
    "conv_stride2",
    "conv_stride1_upsample2",
    "batchnorm",
    "relu",
    "leaky_relu",
    "sigmoid",
    "tanh",
    "reshape",
)

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
INIT_STD = 0.02


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_features: int = 0
    out_features: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    num_features: int = 0
    slope: float = 0.2
    shape: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        k = self.kind
        if k == "dense" and (self.in_features < 1 or self.out_features < 1):
            raise DomainError("dense layer needs positive in/out features")
        if k in CONV_KINDS:
            if self.in_channels < 1 or self.out_channels < 1:
                raise DomainError("conv layer needs positive channel counts")
            if self.kernel < 1 or self.kernel % 2 == 0:
                raise DomainError(f"conv kernels must be odd-sized, got {self.kernel}")
        if k == "batchnorm" and self.num_features < 1:
            raise DomainError("batchnorm needs a positive feature count")
        if k == "leaky_relu" and not 0 < self.slope < 1:
            raise DomainError("leaky slope must lie in (0, 1)")
        if k == "reshape" and (not self.shape or min(self.shape) < 1):
            raise DomainError("reshape needs a positive target shape")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for key, value in asdict(self).items():
            if key != "kind" and value != _DEFAULTS[key]:
                d[key] = list(value) if isinstance(value, tuple) else value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        if "shape" in d:
            d["shape"] = tuple(d["shape"])
        return cls(**d)


_DEFAULTS = {
    "in_features": 0,
    "out_features": 0,
    "in_channels": 0,
    "out_channels": 0,
    "kernel": 0,
    "num_features": 0,
    "slope": 0.2,
    "shape": (),
}
CONV_KINDS = ("conv", "conv_stride2", "conv_stride1_upsample2")


# Builders, so presets read like an architecture table.
def dense(in_features, out_features):
    return LayerSpec("dense", in_features=in_features, out_features=out_features)


def conv(in_channels, out_channels, kernel):
    return LayerSpec("conv", in_channels=in_channels, out_channels=out_channels, kernel=kernel)


def conv_stride2(in_channels, out_channels, kernel):
    return LayerSpec("conv_stride2", in_channels=in_channels, out_channels=out_channels, kernel=kernel)


def conv_stride1_upsample2(in_channels, out_channels, kernel):
    return LayerSpec(
        "conv_stride1_upsample2", in_channels=in_channels, out_channels=out_channels, kernel=kernel
    )


def batchnorm(num_features):
    return LayerSpec("batchnorm", num_features=num_features)


def relu():
    return LayerSpec("relu")


def leaky_relu(slope=0.2):
    return LayerSpec("leaky_relu", slope=slope)


def sigmoid():
    return LayerSpec("sigmoid")


def tanh():
    return LayerSpec("tanh")


def reshape(*shape):
    return LayerSpec("reshape", shape=shape)


# ---------------------------------------------------------------- shapes


def output_shape(spec: LayerSpec, in_shape: tuple) -> tuple:
    """Per-sample output shape, or DimensionError if ``in_shape`` does not fit."""
    k = spec.kind
    if k == "dense":
        if in_shape != (spec.in_features,):
            raise DimensionError(f"dense expects ({spec.in_features},), got {in_shape}")
        return (spec.out_features,)
    if k in CONV_KINDS:
        if len(in_shape) != 3 or in_shape[0] != spec.in_channels:
            raise DimensionError(
                f"{k} expects ({spec.in_channels}, H, W), got {in_shape}"
            )
        _, h, w = in_shape
        if k == "conv_stride2":
            pad = spec.kernel // 2
            return (spec.out_channels, (h + 2 * pad - spec.kernel) // 2 + 1, (w + 2 * pad - spec.kernel) // 2 + 1)
        if k == "conv_stride1_upsample2":
            return (spec.out_channels, 2 * h, 2 * w)
        return (spec.out_channels, h, w)
    if k == "batchnorm":
        if len(in_shape) not in (1, 3) or in_shape[0] != spec.num_features:
            raise DimensionError(f"batchnorm({spec.num_features}) got {in_shape}")
        return in_shape
    if k == "reshape":
        if int(np.prod(in_shape)) != int(np.prod(spec.shape)):
            raise DimensionError(f"cannot reshape {in_shape} to {spec.shape}")
        return spec.shape
    return in_shape


def init_params(spec: LayerSpec, rng: np.random.Generator):
    """Fresh (params, buffers) for one layer: N(0, 0.02) weights, zero biases."""
    k = spec.kind
    if k == "dense":
        return {
            "weight": rng.normal(0.0, INIT_STD, (spec.in_features, spec.out_features)),
            "bias": np.zeros(spec.out_features),
        }, {}
    if k in CONV_KINDS:
        shape = (spec.out_channels, spec.in_channels, spec.kernel, spec.kernel)
        return {"weight": rng.normal(0.0, INIT_STD, shape), "bias": np.zeros(spec.out_channels)}, {}
    if k == "batchnorm":
        n = spec.num_features
        return (
            {"gamma": np.ones(n), "beta": np.zeros(n)},
            {"running_mean": np.zeros(n), "running_var": np.ones(n)},
        )
    return {}, {}


# ---------------------------------------------------------------- kernels


def _dense_fwd(x, p, b, spec, train):
    return x @ p["weight"] + p["bias"], x


def _dense_bwd(x, dy, p, spec):
    return dy @ p["weight"].T, {"weight": x.T @ dy, "bias": dy.sum(axis=0)}


def _im2col(x, k, stride):
    # columns are laid out (C*k*k, N*Ho*Wo) so col2im slices stay contiguous
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, n * ho * wo)
    return cols, (n, c, ho, wo), xp.shape


def _col2im(dcols, dims, padded_shape, k, stride):
    n, c, ho, wo = dims
    pad = k // 2
    d6 = dcols.reshape(c, k, k, n, ho, wo)
    hp, wp = padded_shape[2], padded_shape[3]
    dxp = np.zeros((c, n, hp, wp))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += d6[:, i, j]
    return dxp[:, :, pad : hp - pad, pad : wp - pad].transpose(1, 0, 2, 3)


def _conv_core_fwd(x, p, stride, spec):
    cols, dims, padded = _im2col(x, spec.kernel, stride)
    wmat = p["weight"].reshape(spec.out_channels, -1)
    out = wmat @ cols + p["bias"][:, None]
    n, _, ho, wo = dims
    y = out.reshape(spec.out_channels, n, ho, wo).transpose(1, 0, 2, 3)
    return y, (cols, dims, padded)


def _conv_core_bwd(cache, dy, p, stride, spec):
    cols, dims, padded = cache
    co = spec.out_channels
    dout = dy.transpose(1, 0, 2, 3).reshape(co, -1)
    wmat = p["weight"].reshape(co, -1)
    dw = (dout @ cols.T).reshape(p["weight"].shape)
    dx = _col2im(wmat.T @ dout, dims, padded, spec.kernel, stride)
    return dx, {"weight": dw, "bias": dout.sum(axis=1)}


def _conv_fwd(x, p, b, spec, train):
    return _conv_core_fwd(x, p, 1, spec)


def _conv_bwd(cache, dy, p, spec):
    return _conv_core_bwd(cache, dy, p, 1, spec)


def _conv2_fwd(x, p, b, spec, train):
    return _conv_core_fwd(x, p, 2, spec)


def _conv2_bwd(cache, dy, p, spec):
    return _conv_core_bwd(cache, dy, p, 2, spec)


def upsample_matrix(size: int) -> np.ndarray:
    """(2*size, size) corner-aligned linear interpolation weights."""
    out = 2 * size
    m = np.zeros((out, size))
    if size == 1:
        m[:, 0] = 1.0
        return m
    pos = np.arange(out) * (size - 1) / (out - 1)
    lo = np.minimum(np.floor(pos).astype(int), size - 2)
    frac = pos - lo
    m[np.arange(out), lo] = 1.0 - frac
    m[np.arange(out), lo + 1] += frac
    return m


def bilinear_upsample(x: np.ndarray, factor: int = 2) -> np.ndarray:
    """Double height and width with corner-aligned bilinear interpolation."""
    if factor != 2:
        raise DomainError(f"only factor 2 is supported, got {factor}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise DimensionError(f"bilinear_upsample expects a rank-4 tensor, got rank {x.ndim}")
    uh, uw = upsample_matrix(x.shape[2]), upsample_matrix(x.shape[3])
    return np.einsum("ih,nchw,jw->ncij", uh, x, uw, optimize=True)


def _upsample_bwd(dy, in_hw):
    uh, uw = upsample_matrix(in_hw[0]), upsample_matrix(in_hw[1])
    return np.einsum("ih,ncij,jw->nchw", uh, dy, uw, optimize=True)


def _convup_fwd(x, p, b, spec, train):
    y, cache = _conv_core_fwd(x, p, 1, spec)
    return bilinear_upsample(y), (cache, y.shape[2:])


def _convup_bwd(cache, dy, p, spec):
    conv_cache, hw = cache
    return _conv_core_bwd(conv_cache, _upsample_bwd(dy, hw), p, 1, spec)


def _bn_axes(x):
    return (0,) if x.ndim == 2 else (0, 2, 3)


def _bn_view(v, x):
    return v if x.ndim == 2 else v.reshape(1, -1, 1, 1)


def _bn_fwd(x, p, b, spec, train):
    axes = _bn_axes(x)
    if train:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
    else:
        mean, var = b["running_mean"], b["running_var"]
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - _bn_view(mean, x)) * _bn_view(inv, x)
    y = xhat * _bn_view(p["gamma"], x) + _bn_view(p["beta"], x)
    stats = None
    if train:
        stats = {
            "running_mean": BN_MOMENTUM * b["running_mean"] + (1 - BN_MOMENTUM) * mean,
            "running_var": BN_MOMENTUM * b["running_var"] + (1 - BN_MOMENTUM) * var,
        }
    return y, (xhat, inv, train, stats)


def _bn_bwd(cache, dy, p, spec):
    xhat, inv, train, _ = cache
    axes = _bn_axes(dy)
    grads = {"gamma": (dy * xhat).sum(axis=axes), "beta": dy.sum(axis=axes)}
    dxhat = dy * _bn_view(p["gamma"], dy)
    if not train:
        return dxhat * _bn_view(inv, dy), grads
    count = dy.size // dy.shape[1]
    dx = (
        _bn_view(inv, dy)
        / count
        * (
            count * dxhat
            - dxhat.sum(axis=axes, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
        )
    )
    return dx, grads


def _relu_fwd(x, p, b, spec, train):
    return np.maximum(x, 0.0), x > 0


def _relu_bwd(mask, dy, p, spec):
    return dy * mask, {}


def _leaky_fwd(x, p, b, spec, train):
    return np.where(x > 0, x, spec.slope * x), x > 0


def _leaky_bwd(mask, dy, p, spec):
    return np.where(mask, dy, spec.slope * dy), {}


def _sigmoid_fwd(x, p, b, spec, train):
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return y, y


def _sigmoid_bwd(y, dy, p, spec):
    return dy * y * (1.0 - y), {}


def _tanh_fwd(x, p, b, spec, train):
    y = np.tanh(x)
    return y, y


def _tanh_bwd(y, dy, p, spec):
    return dy * (1.0 - y * y), {}


def _reshape_fwd(x, p, b, spec, train):
    return x.reshape((x.shape[0],) + spec.shape), x.shape


def _reshape_bwd(shape, dy, p, spec):
    return dy.reshape(shape), {}


KERNELS = {
    "dense": (_dense_fwd, _dense_bwd),
    "conv": (_conv_fwd, _conv_bwd),
    "conv_stride2": (_conv2_fwd, _conv2_bwd),
    "conv_stride1_upsample2": (_convup_fwd, _convup_bwd),
    "batchnorm": (_bn_fwd, _bn_bwd),
    "relu": (_relu_fwd, _relu_bwd),
    "leaky_relu": (_leaky_fwd, _leaky_bwd),
    "sigmoid": (_sigmoid_fwd, _sigmoid_bwd),
    "tanh": (_tanh_fwd, _tanh_bwd),
    "reshape": (_reshape_fwd, _reshape_bwd),
}


def batchnorm_stat_updates(cache) -> Optional[dict]:
    return cache[3]
