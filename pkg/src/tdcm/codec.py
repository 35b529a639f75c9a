"""End-to-end encoder/decoder orchestration.

The encoder walks the reverse process t = T … N+2, and at every step
replaces random noise with the combination of M codebook atoms that best
matches the current denoising residual; only the subset rank and the
quantized coefficients are stored.  The decoder replays the stored
selections through the identical arithmetic, then runs N deterministic
tail steps, so its output is bit-for-bit the encoder-side reconstruction.

A priority mask reweights the residual before selection, steering bits
toward chosen coordinates without changing the container by a single bit
of size; the mask itself is never stored.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .bitstream import CompressedImage, Header, bpp, pack_steps, unpack_steps
from .codebook import Codebook, gram_schmidt
from .diffusion import (
    SCHEDULE_LINEAR,
    DiffusionSchedule,
    codebook_step,
    ddim_step,
    initial_state,
    make_schedule,
)
from .selection import (
    QuantizationSet,
    combine_and_normalize,
    normalized_inner_products,
    threshold_select_quantized,
)

Denoiser = Callable[[np.ndarray, int, float], np.ndarray]

# Default ladder of M values used to sweep bitrates (rate-control configs
# index into this list).
M_VALUES = (5, 8, 12, 17, 23, 30, 37, 45, 55, 65, 85, 105, 125, 145, 200, 275, 350, 500, 700)


def choose_ddim_steps(bpp0: float) -> int:
    """Number of bit-free deterministic tail steps for a given raw bitrate.

    ``bpp0`` is the bitrate the container would have with no tail steps;
    lower bitrates get more of them.  Intervals are half-open on the left.
    """
    if bpp0 <= 0.0:
        raise ValueError("bpp0 must be positive")
    for n, upper in ((5, 0.016), (4, 0.025), (3, 0.043), (2, 0.062), (1, 0.086)):
        if bpp0 <= upper:
            return n
    return 0


@dataclass(frozen=True)
class EncodeParams:
    M: int
    T: int = 20
    K: int = 16384
    C: int = 1
    seed: int = 0
    schedule_id: int = SCHEDULE_LINEAR
    quantization: QuantizationSet | None = None
    N: int | None = None  # None: derived from the bitrate
    workers: int = 1
    orthogonalize: bool = False

    def resolved_quantization(self) -> QuantizationSet:
        if self.quantization is None:
            return QuantizationSet.symmetric(self.C)
        if self.quantization.bits != self.C:
            raise ValueError(
                f"quantization set has {self.quantization.bits} bits, C={self.C}"
            )
        return self.quantization


@dataclass(frozen=True)
class PriorityMask:
    """Nonnegative per-coordinate selection weights; all-ones is neutral."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("mask must be a flat vector")
        if not np.all(w >= 0.0):
            raise ValueError("mask entries must be nonnegative")
        object.__setattr__(self, "w", w)

    @classmethod
    def neutral(cls, d: int) -> "PriorityMask":
        return cls(np.ones(d))

    @classmethod
    def from_pixel_map(
        cls, pixel_map: np.ndarray, d: int, channels: int = 1
    ) -> "PriorityMask":
        """Adapt a 2-d pixel-space weight map to a d-dimensional working space.

        The map is mean-pooled by integer factors when the working grid is
        smaller, then repeated across channels.
        """
        m = np.asarray(pixel_map, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError("pixel map must be 2-d")
        if m.size * channels == d:
            pooled = m
        else:
            if d % channels:
                raise ValueError("d is not a multiple of the channel count")
            target = d // channels
            ratio = m.size / target
            side = np.sqrt(ratio)
            fh = int(round(side))
            if fh < 1 or m.shape[0] % fh or m.shape[1] % fh or (
                (m.shape[0] // fh) * (m.shape[1] // fh) != target
            ):
                raise ValueError(
                    f"cannot mean-pool a {m.shape} map onto {target} coordinates"
                )
            pooled = m.reshape(m.shape[0] // fh, fh, m.shape[1] // fh, fh).mean(axis=(1, 3))
        return cls(np.repeat(pooled.ravel(), channels))


@dataclass(frozen=True)
class EncodeResult:
    container: CompressedImage
    reconstruction: np.ndarray  # encoder-side, flat, float64

    @property
    def bpp(self) -> float:
        return self.container.header.bpp()


def _flatten_input(x0: np.ndarray, height, width, channels) -> tuple[np.ndarray, int, int, int]:
    arr = np.asarray(x0, dtype=np.float64)
    if arr.ndim == 3:
        h, w, ch = arr.shape
    elif arr.ndim == 2:
        h, w = arr.shape
        ch = 1
    elif arr.ndim == 1:
        h, w, ch = arr.shape[0], 1, 1
    else:
        raise ValueError("input must be 1-d, 2-d, or 3-d")
    h = height or h
    w = width or w
    ch = channels or ch
    return arr.ravel(), h, w, ch


def _resolve_mask(mask, d: int) -> np.ndarray | None:
    if mask is None:
        return None
    w = mask.w if isinstance(mask, PriorityMask) else PriorityMask(np.asarray(mask)).w
    if w.shape[0] != d:
        raise ValueError(f"mask has {w.shape[0]} entries, working space has {d}")
    return w


def _step_atoms(cb: Codebook, t: int, orthogonalize: bool) -> np.ndarray:
    atoms = cb.atoms(t)
    return gram_schmidt(atoms) if orthogonalize else atoms


def encode_batch(
    images: Sequence[np.ndarray],
    denoiser: Denoiser,
    params: EncodeParams,
    masks: Sequence[PriorityMask | np.ndarray | None] | None = None,
    *,
    height: int | None = None,
    width: int | None = None,
    channels: int | None = None,
    pixel_count: int | None = None,
) -> list[EncodeResult]:
    """Encode several same-shaped images in lockstep.

    All images share the codebooks, so each step materializes its atom
    matrix once; selections and states are tracked per image.  The arrays
    written to each container are identical to encoding images one at a
    time.
    """
    if not images:
        return []
    flats = []
    h = w = ch = None
    for x0 in images:
        flat, h, w, ch = _flatten_input(x0, height, width, channels)
        flats.append(flat)
    d = flats[0].shape[0]
    if any(f.shape[0] != d for f in flats):
        raise ValueError("batch images must share one shape")
    n = len(flats)

    quant = params.resolved_quantization()
    pixels = pixel_count or h * w
    n_tail = params.N
    if n_tail is None:
        n_tail = choose_ddim_steps(bpp(params.T, 0, params.K, params.M, params.C, pixels))
    header = Header(
        T=params.T,
        N=n_tail,
        K=params.K,
        M=params.M,
        C=params.C,
        schedule_id=params.schedule_id,
        seed=params.seed,
        height=h,
        width=w,
        channels=ch,
        latent_dim=0 if d == h * w * ch else d,
    )

    weight_vecs = [None] * n
    if masks is not None:
        if len(masks) != n:
            raise ValueError("one mask (or None) per image")
        weight_vecs = [_resolve_mask(m, d) for m in masks]

    sched = make_schedule(params.T, params.schedule_id)
    cb = Codebook(params.seed, d, params.K, params.T, workers=params.workers)
    x0_mat = np.stack(flats, axis=1)  # (d, n)
    states = np.repeat(initial_state(params.seed, d)[:, None], n, axis=1)

    records: list[list] = [[] for _ in range(n)]
    for t in range(params.T, n_tail + 1, -1):
        ab = sched.alpha_bar_at(t)
        x0_hat = np.stack([denoiser(states[:, j], t, ab) for j in range(n)], axis=1)
        atoms = _step_atoms(cb, t, params.orthogonalize)
        residual = x0_mat - x0_hat
        for j, w_vec in enumerate(weight_vecs):
            if w_vec is not None:
                residual[:, j] *= w_vec
        u = normalized_inner_products(atoms, residual)
        z = np.empty_like(states)
        for j in range(n):
            sel = threshold_select_quantized(u[:, j], params.M, quant)
            records[j].append(sel)
            z[:, j] = combine_and_normalize(atoms, sel)
        states = codebook_step(states, x0_hat, z, t, sched)

    states = _run_tail(states, denoiser, sched, n_tail)
    return [
        EncodeResult(pack_steps(records[j], header, quant), states[:, j].copy())
        for j in range(n)
    ]


def _run_tail(
    states: np.ndarray, denoiser: Denoiser, sched: DiffusionSchedule, n_tail: int
) -> np.ndarray:
    """Deterministic tail: N noise-free steps, then the final estimate."""
    n = states.shape[1]

    def hat(x, t):
        ab = sched.alpha_bar_at(t)
        return np.stack([denoiser(x[:, j], t, ab) for j in range(n)], axis=1)

    for t in range(n_tail + 1, 1, -1):
        states = ddim_step(states, hat(states, t), t, sched)
    return hat(states, 1)


def encode(
    x0: np.ndarray,
    denoiser: Denoiser,
    params: EncodeParams,
    mask: PriorityMask | np.ndarray | None = None,
    *,
    height: int | None = None,
    width: int | None = None,
    channels: int | None = None,
    pixel_count: int | None = None,
) -> EncodeResult:
    """Compress one image; see :func:`encode_batch` for the mechanics."""
    return encode_batch(
        [x0],
        denoiser,
        params,
        [mask] if mask is not None else None,
        height=height,
        width=width,
        channels=channels,
        pixel_count=pixel_count,
    )[0]


def encode_priority(
    x0: np.ndarray,
    denoiser: Denoiser,
    params: EncodeParams,
    mask: PriorityMask | np.ndarray,
    **kwargs,
) -> EncodeResult:
    """Priority-aware encode: the mask is mandatory and never transmitted."""
    if mask is None:
        raise ValueError("priority encode requires a mask")
    return encode(x0, denoiser, params, mask, **kwargs)


def decode_batch(
    containers: Sequence[CompressedImage],
    denoiser: Denoiser,
    *,
    quantization: QuantizationSet | None = None,
    orthogonalize: bool = False,
    workers: int = 1,
) -> list[np.ndarray]:
    """Decode containers that share every header field except the payload."""
    if not containers:
        return []
    head = containers[0].header
    for ci in containers[1:]:
        if ci.header != head:
            raise ValueError("batch decode requires identical headers")
    n = len(containers)
    d = head.d
    sched = make_schedule(head.T, head.schedule_id)
    cb = Codebook(head.seed, d, head.K, head.T, workers=workers)
    all_records = [unpack_steps(ci, quantization) for ci in containers]

    states = np.repeat(initial_state(head.seed, d)[:, None], n, axis=1)
    for step_idx, t in enumerate(range(head.T, head.N + 1, -1)):
        ab = sched.alpha_bar_at(t)
        x0_hat = np.stack([denoiser(states[:, j], t, ab) for j in range(n)], axis=1)
        atoms = _step_atoms(cb, t, orthogonalize)
        z = np.empty_like(states)
        for j in range(n):
            z[:, j] = combine_and_normalize(atoms, all_records[j][step_idx])
        states = codebook_step(states, x0_hat, z, t, sched)

    states = _run_tail(states, denoiser, sched, head.N)
    return [states[:, j].copy() for j in range(n)]


def decode(
    ci: CompressedImage,
    denoiser: Denoiser,
    *,
    quantization: QuantizationSet | None = None,
    orthogonalize: bool = False,
    workers: int = 1,
) -> np.ndarray:
    """Reconstruct the flat working-space vector from a container."""
    return decode_batch(
        [ci],
        denoiser,
        quantization=quantization,
        orthogonalize=orthogonalize,
        workers=workers,
    )[0]
