"""Binary PGM (P5) reading and writing, plus tiled mosaics."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .exceptions import FormatError


def _tokens(data: bytes, count: int):
    """First ``count`` whitespace-separated header tokens and the offset after them."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and (data[pos : pos + 1].isspace() or data[pos : pos + 1] == b"#"):
            if data[pos : pos + 1] == b"#":
                while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("PGM header ended early", pos)
        tokens.append(data[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte precedes the raster


def read_pgm(path) -> np.ndarray:
    """Read a P5 file into an integer array of shape (height, width), plus its maxval."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file", 0)
    try:
        (_, w, h, maxval), offset = _tokens(data, 4)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header", 0) from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: bad PGM dimensions or maxval", 0)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * dtype.itemsize
    if len(data) - offset < need:
        raise FormatError(f"{path}: raster truncated", len(data))
    img = np.frombuffer(data, dtype=dtype, count=w * h, offset=offset).reshape(h, w)
    return img.astype(np.int64), maxval


def write_pgm(path, image, maxval: int = 255):
    """Write a float image in [0, 1] (clipped) as 8-bit P5."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    raster = np.rint(np.clip(img, 0.0, 1.0) * maxval).astype(np.uint8)
    h, w = raster.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(raster.tobytes())
    return Path(path)


def mosaic(images, cols: int, sep: int = 2, background: float = 1.0) -> np.ndarray:
    """Tile (n, h, w) or (n, 1, h, w) images row-major with ``sep``-pixel separators."""
    imgs = np.asarray(images, dtype=np.float64)
    if imgs.ndim == 4:
        imgs = imgs[:, 0]
    n, h, w = imgs.shape
    cols = max(1, min(cols, n))
    rows = -(-n // cols)
    out = np.full((rows * h + (rows - 1) * sep, cols * w + (cols - 1) * sep), background)
    for i, img in enumerate(imgs):
        r, c = divmod(i, cols)
        out[r * (h + sep) : r * (h + sep) + h, c * (w + sep) : c * (w + sep) + w] = img
    return out
