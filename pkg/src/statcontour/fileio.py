"""Graymap (PGM P2/P5) and plain-text grid reading and writing."""

import re

import numpy as np

from .validation import check_field

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header_tokens(data, count):
    tokens, pos = [], 0
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ValueError("truncated graymap header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def read_pgm(path):
    """Read a P5 (8- or 16-bit, big-endian) or P2 graymap as float64."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P5", b"P2"):
        raise ValueError(f"{path}: not a P2/P5 graymap")
    (magic, w, h, maxval), pos = _header_tokens(data, 4)
    try:
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ValueError(f"{path}: bad graymap header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ValueError(f"{path}: bad graymap header")
    n = width * height
    if magic == b"P2":
        values = np.array(data[pos:].split()[:n], dtype=np.int64)
        if values.size != n:
            raise ValueError(f"{path}: expected {n} samples, got {values.size}")
    else:
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos:pos + n * dtype.itemsize]
        if len(raw) != n * dtype.itemsize:
            raise ValueError(f"{path}: truncated pixel data")
        values = np.frombuffer(raw, dtype=dtype)
    if values.max(initial=0) > maxval:
        raise ValueError(f"{path}: sample exceeds maxval")
    return values.reshape(height, width).astype(np.float64)


def write_pgm(path, array, maxval=None):
    """Write non-negative integers as P5; 16-bit big-endian when maxval > 255."""
    arr = np.asarray(array)
    if arr.ndim != 2:
        raise ValueError("graymap data must be 2-D")
    if np.any(arr < 0) or np.any(arr != np.round(arr)):
        raise ValueError("graymap samples must be non-negative integers")
    if maxval is None:
        maxval = max(int(arr.max(initial=0)), 1)
    if not 0 < maxval < 65536 or arr.max(initial=0) > maxval:
        raise ValueError("samples do not fit the graymap range")
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(arr.astype(dtype).tobytes())


def write_mask(path, mask):
    """Write a boolean mask as an 8-bit graymap with values {0, 255}."""
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0), maxval=255)


def read_mask(path):
    return read_image(path) > 0


def to_view(field):
    """16-bit samples for viewing.

    Integer fields inside [0, 65535] are kept as they are; anything else is
    rescaled linearly onto the full range.
    """
    field = check_field(field)
    if np.all(field == np.round(field)) and field.min() >= 0 and field.max() <= 65535:
        return field.astype(np.uint16)
    lo, hi = float(field.min()), float(field.max())
    if hi == lo:
        return np.zeros(field.shape, dtype=np.uint16)
    return np.round((field - lo) / (hi - lo) * 65535.0).astype(np.uint16)


def write_grid(path, field):
    """Text grid: one row per line, values in shortest round-trip form."""
    field = check_field(field)
    with open(path, "w") as fh:
        for row in field:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_grid(path):
    try:
        arr = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise ValueError(f"{path}: not a numeric text grid ({exc})") from exc
    return check_field(arr, name=str(path))


def read_image(path):
    """Read a graymap or a text grid, telling them apart by the magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic in (b"P5", b"P2"):
        return read_pgm(path)
    return read_grid(path)
