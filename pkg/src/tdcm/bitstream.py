"""Container format, combinatorial ranking, and all bit accounting.

A compressed image is a fixed 40-byte header followed by a constant-width
payload: one record per noise-injecting step, each record being

    ceil(log2 C(K, M)) bits   lexicographic rank of the selected M-subset
    M * C bits                coefficient codes in ascending-index order

Nothing is variable-length, so the byte size of a container is a pure
function of the header fields.  Ranks are exchanged through the classic
combinatorial number system; they routinely exceed machine words (a
K=16384, M=700 rank is ~4200 bits), so all ranking math is arbitrary
precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import log2
from typing import Sequence

from gmpy2 import bincoef, mpz

from .selection import QuantizationSet, SparseSelection

MAGIC = b"TDCM"
VERSION = 1

_HEADER_FMT = ">4sBHHIIBBQIIBI"
HEADER_SIZE = struct.calcsize(_HEADER_FMT)

# Above this subset size the per-element binary search pays more for big
# binomials than a linear counter walk does; threshold chosen by timing.
_WALK_THRESHOLD = 128


class MalformedContainerError(Exception):
    """Container bytes violate the format (magic, sizes, ranges, padding)."""


def _comb(n: int, k: int):
    if k < 0 or k > n:
        return mpz(0)
    return bincoef(n, k)


def rank_width(K: int, M: int) -> int:
    """ceil(log2 C(K, M)): bits needed to address any M-subset of [0, K)."""
    c = _comb(K, M)
    if c < 1:
        raise ValueError(f"no {M}-subsets of a {K}-set")
    return int(mpz(c - 1).bit_length())


def rank(indices: Sequence[int], K: int) -> int:
    """Zero-based position of a sorted subset in lexicographic order."""
    M = len(indices)
    if M < 1 or M > K:
        raise ValueError(f"subset size {M} outside [1, {K}]")
    prev = -1
    for c in indices:
        if not prev < c < K:
            raise ValueError("indices must be strictly increasing in [0, K)")
        prev = c
    total = _comb(K, M) - 1
    acc = mpz(0)
    for i, c in enumerate(indices):
        acc += _comb(K - 1 - c, M - i)
    return int(total - acc)


def _unrank_colex_search(r, K: int, M: int) -> list[int]:
    """Colex unrank by per-element binary search (cheap binomials only)."""
    out = [0] * M
    hi = K - 1
    for k in range(M, 0, -1):
        lo = k - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if _comb(mid, k) <= r:
                lo = mid
            else:
                hi = mid - 1
        out[k - 1] = lo
        r -= _comb(lo, k)
        hi = lo - 1
    return out


def _unrank_colex_walk(r, K: int, M: int) -> list[int]:
    """Colex unrank by a descending counter walk with incremental binomials."""
    out = [0] * M
    n, k = K, M
    b = _comb(n, k)
    while k > 0:
        b = b * (n - k) // n  # C(n-1, k)
        n -= 1
        if r >= b:
            r -= b
            k -= 1
            out[k] = n
            if 0 < k < n:
                b = b * (k + 1) // (n - k)  # C(n, k)
    return out


def unrank(r: int, K: int, M: int) -> list[int]:
    """Inverse of :func:`rank`: the sorted M-subset at lexicographic position r."""
    if M < 1 or M > K:
        raise ValueError(f"subset size {M} outside [1, {K}]")
    total = _comb(K, M)
    if not 0 <= r < total:
        raise ValueError(f"rank {r} outside [0, {total})")
    rc = mpz(total - 1 - r)
    if M <= _WALK_THRESHOLD:
        colex = _unrank_colex_search(rc, K, M)
    else:
        colex = _unrank_colex_walk(rc, K, M)
    return [K - 1 - c for c in reversed(colex)]


def step_bits(K: int, M: int, C: int) -> int:
    """Payload bits per step record under the subset-rank protocol."""
    return rank_width(K, M) + M * C


def ordered_step_bits(K: int, M: int, C: int) -> int:
    """Bits per step when indices are sent individually in pick order."""
    return (K - 1).bit_length() * M + C * (M - 1)


def bpp(T: int, N: int, K: int, M: int, C: int, pixels: int) -> float:
    """Bits per pixel of a container: (T-N-1) * step_bits / pixels."""
    if pixels < 1:
        raise ValueError("pixels must be >= 1")
    if not 0 <= N <= T - 1:
        raise ValueError(f"N={N} outside [0, {T - 1}]")
    return (T - N - 1) * step_bits(K, M, C) / pixels


def bpp_ordered(T: int, K: int, M: int, C: int, pixels: int) -> float:
    """Bits per pixel under the per-index protocol, for comparison."""
    if pixels < 1:
        raise ValueError("pixels must be >= 1")
    if T < 1:
        raise ValueError("T must be >= 1")
    return (T - 1) * ordered_step_bits(K, M, C) / pixels


@dataclass(frozen=True)
class BitSavingRow:
    M: int
    index_bits_ordered: int
    index_bits_rank: int
    exact_saving: float
    approx_saving: float

    @property
    def approx_error(self) -> float:
        return abs(self.exact_saving - self.approx_saving)


def bit_saving_study(K: int, m_values: Sequence[int]) -> list[BitSavingRow]:
    """Index-bit saving of rank coding vs per-index coding, per M.

    The exact saving compares M*ceil(log2 K) against ceil(log2 C(K, M));
    the companion column is the crude log2(M)/log2(K) estimate.
    """
    rows = []
    per_index = (K - 1).bit_length()
    for m in m_values:
        old = per_index * m
        new = rank_width(K, m)
        rows.append(
            BitSavingRow(
                M=int(m),
                index_bits_ordered=old,
                index_bits_rank=new,
                exact_saving=(old - new) / old,
                approx_saving=log2(m) / log2(K) if m > 1 else 0.0,
            )
        )
    return rows


def bit_saving_csv(rows: Sequence[BitSavingRow]) -> str:
    lines = ["M,index_bits_ordered,index_bits_rank,exact_saving,approx_saving,approx_error"]
    for r in rows:
        lines.append(
            f"{r.M},{r.index_bits_ordered},{r.index_bits_rank},"
            f"{r.exact_saving:.6f},{r.approx_saving:.6f},{r.approx_error:.6f}"
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Header:
    """Fixed container header; all fields big-endian on the wire."""

    T: int
    N: int
    K: int
    M: int
    C: int
    schedule_id: int
    seed: int
    height: int
    width: int
    channels: int
    latent_dim: int = 0  # 0 means the working space is the pixel grid
    version: int = VERSION

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("T must by >= 2")
        if not 0 <= self.N <= self.T - 1:
            raise ValueError(f"N={self.N} outside [0, {self.T - 1}]")
        if not 1 <= self.M <= self.K:
            raise ValueError(f"M={self.M} outside [1, {self.K}]")
        if self.C < 0:
            raise ValueError("C must be >= 0")
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise ValueError("image dimensions must be positive")

    @property
    def d(self) -> int:
        """Working-space dimension (pixel grid unless a latent dim is set)."""
        return self.latent_dim or self.height * self.width * self.channels

    @property
    def pixels(self) -> int:
        return self.height * self.width

    @property
    def num_records(self) -> int:
        return self.T - self.N - 1

    @property
    def record_bits(self) -> int:
        return step_bits(self.K, self.M, self.C)

    @property
    def payload_bits(self) -> int:
        return self.num_records * self.record_bits

    @property
    def payload_bytes(self) -> int:
        return (self.payload_bits + 7) // 8

    def bpp(self) -> float:
        return self.payload_bits / self.pixels

    def to_bytes(self) -> bytes:
        return struct.pack(
            _HEADER_FMT,
            MAGIC,
            self.version,
            self.T,
            self.N,
            self.K,
            self.M,
            self.C,
            self.schedule_id & 0xFF,
            self.seed & 0xFFFFFFFFFFFFFFFF,
            self.height,
            self.width,
            self.channels,
            self.latent_dim,
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Header":
        if len(data) < HEADER_SIZE:
            raise MalformedContainerError("header truncated")
        magic, version, T, N, K, M, C, sid, seed, h, w, ch, latent = struct.unpack(
            _HEADER_FMT, data[:HEADER_SIZE]
        )
        if magic != MAGIC:
            raise MalformedContainerError(f"bad magic {magic!r}")
        if version != VERSION:
            raise MalformedContainerError(f"unsupported version {version}")
        sid = sid - 256 if sid >= 128 else sid  # schedule_id is a signed tag
        try:
            return cls(T, N, K, M, C, sid, seed, h, w, ch, latent, version)
        except ValueError as exc:
            raise MalformedContainerError(str(exc)) from exc

    def lines(self) -> list[str]:
        pairs = [
            ("version", self.version),
            ("T", self.T),
            ("N", self.N),
            ("K", self.K),
            ("M", self.M),
            ("C", self.C),
            ("schedule_id", self.schedule_id),
            ("seed", self.seed),
            ("height", self.height),
            ("width", self.width),
            ("channels", self.channels),
            ("latent_dim", self.latent_dim),
            ("records", self.num_records),
            ("payload_bits", self.payload_bits),
            ("bpp", f"{self.bpp():.6f}"),
        ]
        return [f"{k}: {v}" for k, v in pairs]


@dataclass(frozen=True)
class CompressedImage:
    header: Header
    payload: bytes

    def to_bytes(self) -> bytes:
        return self.header.to_bytes() + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "CompressedImage":
        header = Header.from_bytes(data)
        payload = data[HEADER_SIZE:]
        if len(payload) != header.payload_bytes:
            raise MalformedContainerError(
                f"payload is {len(payload)} bytes, header implies {header.payload_bytes}"
            )
        return cls(header, payload)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CompressedImage":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def pack_steps(
    records: Sequence[SparseSelection],
    header: Header,
    quantization: QuantizationSet | None = None,
) -> CompressedImage:
    """Pack per-step selections into a container, bit-exactly.

    Records arrive in step order t = T, T-1, …, N+2 and are laid out
    MSB-first; coefficient codes are the ascending-value codes of the
    quantization set, written in ascending-index order.
    """
    if quantization is None:
        quantization = QuantizationSet.symmetric(header.C)
    if quantization.bits != header.C:
        raise ValueError("quantization set size does not match header C")
    if len(records) != header.num_records:
        raise ValueError(
            f"expected {header.num_records} records, got {len(records)}"
        )
    w_rank = rank_width(header.K, header.M)
    acc = mpz(0)
    for sel in records:
        if len(sel) != header.M:
            raise ValueError(f"selection of size {len(sel)}, expected M={header.M}")
        acc = (acc << w_rank) | rank(sel.indices.tolist(), header.K)
        if header.C:
            for code in quantization.codes_for(sel.coefficients):
                acc = (acc << header.C) | int(code)
    pad = header.payload_bytes * 8 - header.payload_bits
    payload = int(acc << pad).to_bytes(header.payload_bytes, "big")
    return CompressedImage(header, payload)


def unpack_steps(
    ci: CompressedImage, quantization: QuantizationSet | None = None
) -> list[SparseSelection]:
    """Exact inverse of :func:`pack_steps`."""
    header = ci.header
    if quantization is None:
        quantization = QuantizationSet.symmetric(header.C)
    if quantization.bits != header.C:
        raise ValueError("quantization set size does not match header C")
    if len(ci.payload) != header.payload_bytes:
        raise MalformedContainerError("payload length mismatch")
    acc = mpz(int.from_bytes(ci.payload, "big")) if ci.payload else mpz(0)
    pad = header.payload_bytes * 8 - header.payload_bits
    if pad and acc & ((1 << pad) - 1):
        raise MalformedContainerError("nonzero padding bits")
    acc >>= pad

    w_rank = rank_width(header.K, header.M)
    coef_mask = (1 << header.C) - 1
    max_rank = _comb(header.K, header.M)
    out: list[SparseSelection] = []
    for _ in range(header.num_records):
        codes = [0] * header.M
        if header.C:
            for j in range(header.M - 1, -1, -1):
                codes[j] = int(acc & coef_mask)
                acc >>= header.C
        r = int(acc & ((mpz(1) << w_rank) - 1))
        acc >>= w_rank
        if r >= max_rank:
            raise MalformedContainerError(f"rank {r} out of range")
        indices = unrank(r, header.K, header.M)
        out.append(SparseSelection(indices, quantization.values_for(codes)))
    out.reverse()
    return out
