"""PIGANCKPT checkpoint files.

Layout (all integers little-endian)::

    offset  size  field
    0       9     magic b"PIGANCKPT"
    9       4     uint32 format version (currently 1)
    13      8     uint64 header length H
    21      H     UTF-8 JSON header
    21+H    ...   float64 little-endian array blobs, in header manifest order

The header is ``{"networks": {name: network config}, "optimizers": {name:
hyperparameters + step}, "meta": {...}, "arrays": [[key, shape], ...]}``.
Array keys are ``net/<name>/<layer>/<param>``, ``buf/<name>/<layer>/<buffer>``,
``adam_m/<name>/<layer>/<param>`` and ``adam_v/<name>/<layer>/<param>``.
The file must end exactly after the last blob.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import FormatError, VersionError
from .network import Network
from .optim import OptimizerState

MAGIC = b"PIGANCKPT"
VERSION = 1
_PREFIX = struct.Struct("<9sIQ")


@dataclass
class Checkpoint:
    networks: dict
    optimizers: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _collect(networks, optimizers):
    arrays = []
    for name, net in networks.items():
        for i, p in enumerate(net.params):
            arrays += [(f"net/{name}/{i}/{k}", a) for k, a in sorted(p.items())]
        for i, b in enumerate(net.buffers):
            arrays += [(f"buf/{name}/{i}/{k}", a) for k, a in sorted(b.items())]
    for name, st in optimizers.items():
        for slot, acc in (("adam_m", st.m), ("adam_v", st.v)):
            for i, p in enumerate(acc):
                arrays += [(f"{slot}/{name}/{i}/{k}", a) for k, a in sorted(p.items())]
    return arrays


def save_checkpoint(path, networks: dict, optimizers: dict | None = None, meta: dict | None = None):
    optimizers = optimizers or {}
    arrays = _collect(networks, optimizers)
    header = {
        "networks": {name: net.to_config() for name, net in networks.items()},
        "optimizers": {name: dict(st.hyper(), step=st.step) for name, st in optimizers.items()},
        "meta": meta or {},
        "arrays": [[key, list(a.shape)] for key, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return Path(path)


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise FormatError("file too short for a checkpoint prefix", len(data))
    magic, version, hlen = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise VersionError(f"checkpoint version {version} is not supported (expected {VERSION})", 9)
    start = _PREFIX.size
    if start + hlen > len(data):
        raise FormatError("header runs past end of file", len(data))
    try:
        header = json.loads(data[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable header: {exc}", start) from None

    offset = start + hlen
    arrays = {}
    for key, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise FormatError(f"array {key!r} truncated", offset)
        arrays[key] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes", offset)

    def gather(prefix, name, n_layers):
        out = [{} for _ in range(n_layers)]
        head = f"{prefix}/{name}/"
        for key, a in arrays.items():
            if key.startswith(head):
                layer, pname = key[len(head) :].split("/", 1)
                out[int(layer)][pname] = a
        return out

    networks = {}
    for name, config in header["networks"].items():
        n = len(config["layers"])
        networks[name] = Network.from_config(
            config, params=gather("net", name, n), buffers=gather("buf", name, n)
        )
    optimizers = {}
    for name, hyper in header["optimizers"].items():
        hyper = dict(hyper)
        step = hyper.pop("step")
        n = len(networks[name].specs) if name in networks else 0
        optimizers[name] = OptimizerState(
            step=step, m=gather("adam_m", name, n), v=gather("adam_v", name, n), **hyper
        )
    return Checkpoint(networks, optimizers, header["meta"])
