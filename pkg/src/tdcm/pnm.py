"""Minimal binary PGM (P5) / PPM (P6) reader and writer, 8-bit only."""

from __future__ import annotations

import numpy as np


def read_pnm(path) -> np.ndarray:
    """Read a binary PGM/PPM file into a uint8 array (H, W) or (H, W, 3)."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r} (binary P5/P6 only)")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"only maxval 255 is supported, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    count = width * height * channels
    pixels = np.frombuffer(data[pos : pos + count], dtype=np.uint8)
    if pixels.size != count:
        raise ValueError("truncated pixel data")
    img = pixels.reshape(height, width, channels)
    return img[:, :, 0] if channels == 1 else img


def write_pnm(path, image: np.ndarray) -> None:
    """Write a uint8 array (H, W) or (H, W, 3) as binary PGM/PPM."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        raise ValueError("image must be uint8")
    if arr.ndim == 2:
        magic, h, w = b"P5", *arr.shape
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic, h, w = b"P6", arr.shape[0], arr.shape[1]
    else:
        raise ValueError("image must be (H, W) or (H, W, 3)")
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(arr.tobytes())


def to_working(image: np.ndarray) -> np.ndarray:
    """uint8 pixels -> flat float64 working vector in [-1, 1]."""
    return np.asarray(image, dtype=np.float64).ravel() / 127.5 - 1.0


def from_working(vec: np.ndarray, height: int, width: int, channels: int) -> np.ndarray:
    """Flat working vector in [-1, 1] -> clipped uint8 pixels."""
    arr = np.clip((np.asarray(vec) + 1.0) * 127.5, 0.0, 255.0)
    arr = np.round(arr).astype(np.uint8)
    if channels == 1:
        return arr.reshape(height, width)
    return arr.reshape(height, width, channels)
