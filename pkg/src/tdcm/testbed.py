"""Analytic denoisers, metrics, and the remote-denoiser client.

The Gaussian prior makes the whole pipeline verifiable without any neural
network: if x0 ~ N(mean, diag(variance)) and x_t = sqrt(ᾱ_t) x0 +
sqrt(1-ᾱ_t) ε, the exact conditional mean of x0 given x_t is available in
closed form, so the codec can be exercised end to end against ground
truth.

The same denoiser interface can be served by a separate process over a
small framed protocol (see :class:`RemoteDenoiser`), which is how real
pretrained models are plugged in without becoming dependencies.
"""

from __future__ import annotations

import json
import math
import socket
import struct
import subprocess
from dataclasses import dataclass

import numpy as np

from .diffusion import DiffusionSchedule

PROTOCOL_VERSION = 1


class DenoiserConnectionError(Exception):
    """The remote endpoint cannot be reached or died mid-session."""


class ProtocolError(Exception):
    """The remote endpoint sent a frame that violates the protocol."""


class ShapeMismatchError(Exception):
    """The remote endpoint returned a payload of the wrong shape."""


@dataclass(frozen=True)
class GaussianPrior:
    """Independent per-coordinate Gaussian prior N(mean_i, variance_i)."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        var = np.asarray(self.variance, dtype=np.float64)
        if mean.shape != var.shape or mean.ndim != 1:
            raise ValueError("mean and variance must be 1-d and aligned")
        if not np.all(var > 0.0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def default_ramp(cls, d: int, lo: float = 0.25, hi: float = 4.0) -> "GaussianPrior":
        """Zero-mean prior with a linear variance ramp, so coordinates differ
        in difficulty and residuals have structure worth selecting on."""
        return cls(np.zeros(d), np.linspace(lo, hi, d))

    def sample(self, count: int, seed: int) -> list[np.ndarray]:
        gen = np.random.default_rng(seed)
        std = np.sqrt(self.variance)
        return [self.mean + std * gen.standard_normal(self.d) for _ in range(count)]


def mmse_from_alpha_bar(
    x_t: np.ndarray, alpha_bar: float, prior: GaussianPrior
) -> np.ndarray:
    """Exact E[x0 | x_t] for the forward corruption at signal level ᾱ.

    Per coordinate:  x̂ = μ + √ᾱ σ² (x_t - √ᾱ μ) / (ᾱ σ² + 1 - ᾱ).
    """
    a = float(alpha_bar)
    mean = prior.mean
    var = prior.variance
    if x_t.ndim == 2:
        mean = mean[:, None]
        var = var[:, None]
    if x_t.shape[0] != prior.d:
        raise ValueError(f"state dimension {x_t.shape[0]} != prior dimension {prior.d}")
    gain = math.sqrt(a) * var / (a * var + 1.0 - a)
    return mean + gain * (x_t - math.sqrt(a) * mean)


def mmse_denoise(
    x_t: np.ndarray, t: int, sched: DiffusionSchedule, prior: GaussianPrior
) -> np.ndarray:
    """Schedule-indexed wrapper around :func:`mmse_from_alpha_bar`."""
    sched.check_step(t)
    return mmse_from_alpha_bar(x_t, sched.alpha_bar_at(t), prior)


def gaussian_denoiser(prior: GaussianPrior):
    """Denoiser callable (x_t, t, alpha_bar) -> x̂ for the codec."""

    def denoise(x_t: np.ndarray, t: int, alpha_bar: float) -> np.ndarray:
        return mmse_from_alpha_bar(x_t, alpha_bar, prior)

    return denoise


def identity_denoiser():
    def denoise(x_t: np.ndarray, t: int, alpha_bar: float) -> np.ndarray:
        return x_t

    return denoise


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB between images on [0, 1]; inputs are clamped first.

    Peak is 1.0; identical inputs give +inf.
    """
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    aa = np.clip(a, 0.0, 1.0)
    bb = np.clip(b, 0.0, 1.0)
    mse = float(np.mean((aa - bb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def to_unit(x: np.ndarray, scale: float = 8.0) -> np.ndarray:
    """Affine map of working-space values in [-scale, scale] onto [0, 1].

    Prior samples are unbounded, so metric comparisons use a scale wide
    enough (default 8 = four standard deviations of the widest default
    coordinate) that clipping is a no-op in practice.
    """
    return np.clip(x / (2.0 * scale) + 0.5, 0.0, 1.0)


def scaled_psnr(a: np.ndarray, b: np.ndarray, scale: float = 8.0) -> float:
    """PSNR of unbounded working-space vectors after the unit mapping."""
    return psnr(to_unit(a, scale), to_unit(b, scale))


# --------------------------------------------------------------------------
# Wire protocol client
#
# Frame layout (both directions):
#   u32 big-endian header length
#   header: UTF-8 JSON object {"op", "t", "alpha_bar", "shape", ...}
#   payload: prod(shape) little-endian float32 values ("shape" absent -> none)
#
# A session opens with {"op": "hello", "version": 1} answered in kind.
# Requests use op "denoise"; responses mirror the request with op "result".
# Servers report failures with op "error" and close the connection.
# --------------------------------------------------------------------------


def write_frame(stream, header: dict, payload: np.ndarray | None = None) -> None:
    raw = json.dumps(header).encode("utf-8")
    stream.write(struct.pack(">I", len(raw)))
    stream.write(raw)
    if payload is not None:
        stream.write(np.ascontiguousarray(payload, dtype="<f4").tobytes())
    stream.flush()


def _read_exact(stream, count: int) -> bytes:
    chunks = []
    remaining = count
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            raise DenoiserConnectionError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(stream) -> tuple[dict, np.ndarray | None]:
    header_len = struct.unpack(">I", _read_exact(stream, 4))[0]
    try:
        header = json.loads(_read_exact(stream, header_len).decode("utf-8"))
    except ValueError as exc:
        raise ProtocolError(f"unparseable frame header: {exc}") from exc
    if not isinstance(header, dict) or "op" not in header:
        raise ProtocolError("frame header is not an op object")
    payload = None
    shape = header.get("shape")
    if shape is not None:
        count = int(np.prod(shape))
        payload = np.frombuffer(_read_exact(stream, 4 * count), dtype="<f4").reshape(shape)
    return header, payload


class RemoteDenoiser:
    """Client for an external denoiser process; usable as the codec oracle.

    One request is in flight at a time.  Any protocol violation or
    transport failure raises and poisons the session: there is no silent
    fallback to a local denoiser.
    """

    def __init__(self, endpoint: str, *, timeout: float = 30.0):
        self._proc = None
        self._sock = None
        if ":" in endpoint:
            host, port = endpoint.rsplit(":", 1)
            try:
                self._sock = socket.create_connection((host, int(port)), timeout=timeout)
            except OSError as exc:
                raise DenoiserConnectionError(f"cannot connect to {endpoint}: {exc}") from exc
            self._stream = self._sock.makefile("rwb")
        else:
            raise ValueError("endpoint must be host:port")
        self._handshake()

    @classmethod
    def spawn(cls, argv: list[str]) -> "RemoteDenoiser":
        """Run the server as a child process and talk to it over stdio."""
        self = cls.__new__(cls)
        self._sock = None
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise DenoiserConnectionError(f"cannot spawn {argv[0]}: {exc}") from exc
        self._stream = _PipePair(self._proc.stdin, self._proc.stdout)
        self._handshake()
        return self

    def _handshake(self) -> None:
        write_frame(self._stream, {"op": "hello", "version": PROTOCOL_VERSION})
        header, _ = read_frame(self._stream)
        if header.get("op") == "error":
            raise ProtocolError(f"server rejected hello: {header}")
        if header.get("op") != "hello" or header.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"bad hello response: {header}")

    def __call__(self, x_t: np.ndarray, t: int, alpha_bar: float) -> np.ndarray:
        flat = np.asarray(x_t, dtype=np.float64).ravel()
        write_frame(
            self._stream,
            {
                "op": "denoise",
                "t": int(t),
                "alpha_bar": float(alpha_bar),
                "shape": [int(flat.shape[0])],
            },
            flat,
        )
        header, payload = read_frame(self._stream)
        if header.get("op") == "error":
            raise ProtocolError(f"server error: {header}")
        if header.get("op") != "result":
            raise ProtocolError(f"unexpected op {header.get('op')!r}")
        if payload is None or payload.shape != flat.shape:
            raise ShapeMismatchError(
                f"expected shape {flat.shape}, got "
                f"{None if payload is None else payload.shape}"
            )
        out = payload.astype(np.float64)
        return out.reshape(np.asarray(x_t).shape)

    def close(self) -> None:
        try:
            if self._sock is not None:
                self._stream.close()
                self._sock.close()
            if self._proc is not None:
                if self._proc.stdin:
                    self._proc.stdin.close()
                self._proc.wait(timeout=5)
        except Exception:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _PipePair:
    """File-like adapter exposing a subprocess's stdin/stdout as one stream."""

    def __init__(self, w, r):
        self._w = w
        self._r = r

    def write(self, data):
        return self._w.write(data)

    def flush(self):
        self._w.flush()

    def read(self, n):
        return self._r.read(n)

    def close(self):
        self._w.close()
        self._r.close()
