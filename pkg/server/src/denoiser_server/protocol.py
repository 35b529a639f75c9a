"""Framed wire protocol, server side.

Frame = 4-byte big-endian header length, UTF-8 JSON header, then
prod(header["shape"]) little-endian float32 values (no payload when
"shape" is absent).  Sessions open with a version handshake:

    -> {"op": "hello", "version": 1}
    <- {"op": "hello", "version": 1}

after which each request frame {"op": "denoise", "t", "alpha_bar",
"shape"} is answered by one {"op": "result", ...} frame mirroring it.
Violations are answered with {"op": "error", "code", "message"} and the
connection is closed.
"""

from __future__ import annotations

import json
import struct

import numpy as np

VERSION = 1


class FrameError(Exception):
    """Raised when the peer sends bytes that cannot be a valid frame."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class PeerClosed(Exception):
    """The peer hung up cleanly between frames."""


def read_exact(stream, count: int, *, allow_eof: bool = False) -> bytes:
    chunks = []
    remaining = count
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            if allow_eof and remaining == count:
                raise PeerClosed()
            raise FrameError("bad-frame", "connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(stream) -> tuple[dict, np.ndarray | None]:
    header_len = struct.unpack(">I", read_exact(stream, 4, allow_eof=True))[0]
    try:
        header = json.loads(read_exact(stream, header_len).decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise FrameError("bad-frame", f"unparseable header: {exc}") from exc
    if not isinstance(header, dict) or "op" not in header:
        raise FrameError("bad-frame", "header is not an op object")
    payload = None
    shape = header.get("shape")
    if shape is not None:
        try:
            count = int(np.prod(shape))
        except (TypeError, ValueError) as exc:
            raise FrameError("bad-frame", f"bad shape: {shape!r}") from exc
        payload = np.frombuffer(read_exact(stream, 4 * count), dtype="<f4").reshape(shape)
    return header, payload


def write_frame(stream, header: dict, payload: np.ndarray | None = None) -> None:
    raw = json.dumps(header).encode("utf-8")
    stream.write(struct.pack(">I", len(raw)))
    stream.write(raw)
    if payload is not None:
        stream.write(np.ascontiguousarray(payload, dtype="<f4").tobytes())
    stream.flush()


def write_error(stream, code: str, message: str) -> None:
    write_frame(stream, {"op": "error", "code": code, "message": message})
