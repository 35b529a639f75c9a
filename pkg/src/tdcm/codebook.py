"""Seed-addressed Gaussian codebooks and orthogonality diagnostics.

A codebook is never stored or transmitted: step t's d-by-K atom matrix is
regenerated on demand from ``(seed, t, d, K)`` via the counter-based
streams in :mod:`tdcm.rng`, so two independently built endpoints agree
bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng

# 2**28 entries = the largest square codebook we accept by default
# (16384 x 16384); above that, generation is almost certainly a mistake.
DEFAULT_MAX_ENTRIES = 1 << 28


class CapacityError(Exception):
    """Requested atom matrix exceeds the configured memory cap."""


@dataclass(frozen=True)
class OrthogonalityStats:
    mean_abs_cosine: float
    max_abs_cosine: float
    norm_mean: float
    norm_std: float
    pairs_sampled: int


class Codebook:
    """Lazy per-step atom matrices C_t with optional single-step caching.

    Column i of ``atoms(t)`` is atom i: d i.i.d. standard-normal values,
    occupying stream slice ``[i*d, (i+1)*d)`` of stream t.  Atoms are
    defined in float32 (see :mod:`tdcm.rng`} and upcast exactly when a
    wider dtype is requested.
    """

    def __init__(
        self,
        seed: int,
        d: int,
        K: int,
        T: int,
        *,
        dtype=np.float64,
        workers: int = 1,
        max_entries: int = DEFAULT_MAX_ENTRIES,
        cache: bool = False,
    ):
        if d < 1 or K < 1:
            raise ValueError("d and K must be positive")
        if T < 2:
            raise ValueError("T must be >= 2")
        self.seed = int(seed)
        self.d = int(d)
        self.K = int(K)
        self.T = int(T)
        self.dtype = np.dtype(dtype)
        self.workers = int(workers)
        self.max_entries = int(max_entries)
        self._cache_enabled = bool(cache)
        self._cache: tuple[int, np.ndarray] | None = None

    def _check_step(self, t: int) -> None:
        if not 2 <= t <= self.T:
            raise ValueError(f"step {t} outside the transmitted range [2, {self.T}]")

    def atoms(self, t: int) -> np.ndarray:
        """The d-by-K atom matrix for step t (deterministic in all inputs)."""
        self._check_step(t)
        if self.d * self.K > self.max_entries:
            raise CapacityError(
                f"{self.d}x{self.K} atoms exceed the cap of {self.max_entries} entries"
            )
        if self._cache is not None and self._cache[0] == t:
            return self._cache[1]
        mat = rng.normal_matrix(self.seed, t, self.d, self.K, workers=self.workers)
        if self.dtype != np.float32:
            mat = mat.astype(self.dtype)
        if self._cache_enabled:
            self._cache = (t, mat)
        return mat

    def gram_schmidt(self, t: int) -> np.ndarray:
        return gram_schmidt(self.atoms(t))

    def orthogonality_report(self, t: int, **kwargs) -> OrthogonalityStats:
        return orthogonality_report(self.atoms(t), **kwargs)


def gram_schmidt(atoms: np.ndarray) -> np.ndarray:
    """Orthogonalize atoms in column order, rescaling each to norm sqrt(d).

    Output column i spans the same direction classical Gram-Schmidt would
    produce (computed via a QR factorization, which is numerically
    stronger), with its sign fixed so that it keeps a positive component
    along the original atom i.  Rescaling to sqrt(d) preserves the norm
    statistics of raw standard-normal atoms.
    """
    d, K = atoms.shape
    if K > d:
        raise ValueError(f"cannot orthogonalize {K} columns in dimension {d}")
    q, r = np.linalg.qr(atoms.astype(np.float64, copy=False))
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs * np.sqrt(d)


def orthogonality_report(
    atoms: np.ndarray, *, max_pairs: int = 2000, sample_seed: int = 0
) -> OrthogonalityStats:
    """Cosine statistics over sampled distinct column pairs, plus norms."""
    d, K = atoms.shape
    norms = np.linalg.norm(atoms.astype(np.float64, copy=False), axis=0)
    if K < 2:
        return OrthogonalityStats(
            mean_abs_cosine=float("nan"),
            max_abs_cosine=float("nan"),
            norm_mean=float(norms.mean()),
            norm_std=float(norms.std()),
            pairs_sampled=0,
        )
    total_pairs = K * (K - 1) // 2
    gen = np.random.default_rng(sample_seed)
    if total_pairs <= max_pairs:
        ii, jj = np.triu_indices(K, k=1)
    else:
        ii = gen.integers(0, K, size=max_pairs)
        jj = gen.integers(0, K - 1, size=max_pairs)
        jj = np.where(jj >= ii, jj + 1, jj)  # distinct partner
    left = atoms[:, ii].astype(np.float64, copy=False)
    right = atoms[:, jj].astype(np.float64, copy=False)
    cos = np.abs(np.einsum("ij,ij->j", left, right)) / (norms[ii] * norms[jj])
    return OrthogonalityStats(
        mean_abs_cosine=float(cos.mean()),
        max_abs_cosine=float(cos.max()),
        norm_mean=float(norms.mean()),
        norm_std=float(norms.std()),
        pairs_sampled=int(len(cos)),
    )
