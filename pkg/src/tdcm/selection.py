"""Per-step sparse noise construction.

Two selectors approximate a residual with M codebook atoms carrying
quantized coefficients:

* thresholding — rank every atom by how much selecting-and-quantizing it
  reduces the squared error, take the top M in closed form;
* matching pursuit (``mp_select``) — the greedy convex-combination
  baseline it replaces, kept for benchmarking.

A brute-force enumerator provides the exact optimum on small instances so
both can be checked against ground truth.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


class DegenerateSelectionError(Exception):
    """The selected combination has zero variance and cannot be normalized."""


class SearchSpaceError(Exception):
    """Brute-force enumeration would exceed the configured cap."""


@dataclass(frozen=True)
class QuantizationSet:
    """The 2^C allowed nonzero coefficient values, sorted ascending."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0:
            raise ValueError("empty quantization set")
        if len(set(vals)) != len(vals) or list(vals) != sorted(vals):
            raise ValueError("values must be distinct and ascending")
        if 0.0 in vals:
            raise ValueError("0 is reserved for unselected atoms")
        if len(vals) & (len(vals) - 1):
            raise ValueError("size must be a power of two (2^C values)")
        object.__setattr__(self, "values", vals)

    @property
    def bits(self) -> int:
        """C, the per-coefficient bit cost."""
        return (len(self.values) - 1).bit_length()

    @classmethod
    def sign_pair(cls) -> "QuantizationSet":
        return cls((-1.0, 1.0))

    @classmethod
    def symmetric(cls, bits: int) -> "QuantizationSet":
        """2^bits values evenly spaced over [-1, 1] (a single +1 for bits=0)."""
        if bits < 0:
            raise ValueError("bits must be >= 0")
        if bits == 0:
            return cls((1.0,))
        n = 1 << bits
        return cls(tuple(-1.0 + 2.0 * j / (n - 1) for j in range(n)))

    @classmethod
    def unit_interval(cls, bits: int) -> "QuantizationSet":
        """2^bits convex weights {j/2^bits : j = 1..2^bits} in (0, 1]."""
        if bits < 0:
            raise ValueError("bits must be >= 0")
        n = 1 << bits
        return cls(tuple(j / n for j in range(1, n + 1)))

    def nearest(self, u: np.ndarray) -> np.ndarray:
        """Nearest value to each entry of u; ties resolve to the smaller value."""
        vals = np.asarray(self.values)
        if len(vals) == 1:
            return np.full(np.shape(u), vals[0])
        mids = (vals[:-1] + vals[1:]) / 2.0
        return vals[np.searchsorted(mids, u, side="left")]

    def codes_for(self, coefficients: np.ndarray) -> np.ndarray:
        """Map coefficient values to their ascending-order integer codes."""
        vals = np.asarray(self.values)
        idx = np.searchsorted(vals, coefficients)
        idx = np.clip(idx, 0, len(vals) - 1)
        if not np.all(vals[idx] == np.asarray(coefficients)):
            raise ValueError("coefficient outside the quantization set")
        return idx.astype(np.uint64)

    def values_for(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        if codes.size and (codes.min() < 0 or codes.max() >= len(self.values)):
            raise ValueError("coefficient code out of range")
        return np.asarray(self.values)[codes]


@dataclass(frozen=True)
class SparseSelection:
    """M strictly increasing atom indices with aligned quantized coefficients."""

    indices: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        coef = np.asarray(self.coefficients, dtype=np.float64)
        if idx.ndim != 1 or coef.shape != idx.shape:
            raise ValueError("indices and coefficients must be aligned 1-d arrays")
        if idx.size == 0:
            raise ValueError("empty selection")
        if idx.size > 1 and not np.all(np.diff(idx) > 0):
            raise ValueError("indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "coefficients", coef)

    def __len__(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class MPSelection:
    """Matching-pursuit trace: indices in pick order with their mix weights."""

    indices: tuple[int, ...]
    weights: tuple[float, ...]


def inner_products(atoms: np.ndarray, residual: np.ndarray) -> np.ndarray:
    """u_i = <atom_i, residual> for every column."""
    if atoms.shape[0] != residual.shape[0]:
        raise ValueError(
            f"atoms have dimension {atoms.shape[0]}, residual {residual.shape[0]}"
        )
    return atoms.T @ residual


def normalized_inner_products(atoms: np.ndarray, residual: np.ndarray) -> np.ndarray:
    """Inner products scaled by the nominal squared atom norm d.

    With this scaling, nearest-value quantization of u_i is exactly the
    error-minimizing coefficient choice whenever the atoms are orthogonal
    with norm sqrt(d); for the sign set {-1, +1} the scale is irrelevant.
    """
    return inner_products(atoms, residual) / atoms.shape[0]


def _top_m_stable(metric: np.ndarray, m: int) -> np.ndarray:
    """Indices of the m largest entries; equal entries go to the lowest index."""
    order = np.argsort(-metric, kind="stable")
    return np.sort(order[:m])


def threshold_select_sign(u: np.ndarray, m: int) -> SparseSelection:
    """Top-M by |u| with sign coefficients (the 𝒱 = {-1, +1} fast path).

    sign(0) is taken as +1; ties in |u| resolve to the lowest index.
    """
    u = np.asarray(u)
    if not 1 <= m <= u.shape[0]:
        raise ValueError(f"M={m} outside [1, {u.shape[0]}]")
    idx = _top_m_stable(np.abs(u), m)
    coef = np.where(u[idx] >= 0.0, 1.0, -1.0)
    return SparseSelection(idx, coef)


def threshold_select_quantized(
    u: np.ndarray, m: int, quantization: QuantizationSet
) -> SparseSelection:
    """Top-M by per-atom error reduction with nearest-value coefficients.

    For each atom, quantizing its ideal coefficient u_i to the nearest
    allowed value q_i changes the squared error by

        gain_i = u_i**2 - (q_i - u_i)**2

    and the best M atoms under the orthogonality approximation are the M
    largest gains (ties to the lowest index).
    """
    u = np.asarray(u)
    if not 1 <= m <= u.shape[0]:
        raise ValueError(f"M={m} outside [1, {u.shape[0]}]")
    q = quantization.nearest(u)
    gain = u**2 - (q - u) ** 2
    idx = _top_m_stable(gain, m)
    return SparseSelection(idx, q[idx])


def combine_and_normalize(atoms: np.ndarray, sel: SparseSelection) -> np.ndarray:
    """Combine the selected atoms and scale the sum to unit sample std.

    The standard deviation uses the population convention (mean
    subtracted); only the scale is adjusted, the mean is left in place.
    """
    coef = sel.coefficients.astype(atoms.dtype, copy=False)
    combo = atoms[:, sel.indices] @ coef
    std = float(combo.std())
    if not math.isfinite(std) or std <= 0.0:
        raise DegenerateSelectionError("combination has zero variance")
    return combo / std


def residual_angle(z: np.ndarray, residual: np.ndarray) -> float:
    """Unsigned angle in [0, pi] between a vector and the residual."""
    zz = np.asarray(z, dtype=np.float64)
    rr = np.asarray(residual, dtype=np.float64)
    nz = np.linalg.norm(zz)
    nr = np.linalg.norm(rr)
    if nz == 0.0 or nr == 0.0:
        raise ValueError("angle undefined for zero vectors")
    cos = float(zz @ rr) / (float(nz) * float(nr))
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def selection_objective(
    atoms: np.ndarray, sel: SparseSelection, residual: np.ndarray
) -> float:
    """Squared error ||C s - r||^2 of a selection against the residual."""
    approx = atoms[:, sel.indices] @ sel.coefficients
    return float(np.sum((approx - residual) ** 2))


def mp_select(
    atoms: np.ndarray,
    residual: np.ndarray,
    m: int,
    mix_weights: QuantizationSet,
    *,
    chunk: int = 4096,
) -> tuple[MPSelection, np.ndarray]:
    """Greedy matching pursuit over convex combinations (the slow baseline).

    The first atom maximizes the plain inner product with the residual.
    Each later iteration scans every (atom, weight) pair exhaustively,
    materializing the candidate (1-w)*current + w*atom and keeping the one
    best correlated with the residual; the accepted combination is then
    rescaled to unit sample std.  The per-iteration cost is deliberately
    proportional to |weights| * K * d, matching the textbook procedure.

    Repeated picks of the same atom are allowed.  Ties resolve to the
    earliest candidate in scan order (weights ascending, then atom index).
    """
    d, K = atoms.shape
    if not 1 <= m <= K:
        raise ValueError(f"M={m} outside [1, {K}]")
    if atoms.shape[0] != residual.shape[0]:
        raise ValueError("dimension mismatch")
    weights = mix_weights.values
    if any(not 0.0 < w <= 1.0 for w in weights):
        raise ValueError("mix weights must lie in (0, 1]")
    if m >= 2 and mix_weights.bits < 2:
        raise ValueError("matching pursuit needs at least 4 weight levels for M >= 2")

    r = residual.astype(atoms.dtype, copy=False)
    u0 = atoms.T @ r
    first = int(np.argmax(u0))
    current = atoms[:, first].copy()
    std = float(current.std())
    if std <= 0.0:
        raise DegenerateSelectionError("first atom has zero variance")
    current /= std
    picks = [first]
    mix = [1.0]

    for _ in range(m - 1):
        best_score = -np.inf
        best_col = -1
        best_w = weights[0]
        for w in weights:
            keep = atoms.dtype.type(1.0 - w)
            lam = atoms.dtype.type(w)
            base = keep * current
            for lo in range(0, K, chunk):
                hi = min(lo + chunk, K)
                cand = lam * atoms[:, lo:hi]
                cand += base[:, None]
                dots = r @ cand
                norms = np.sqrt(np.einsum("ij,ij->j", cand, cand))
                with np.errstate(divide="ignore", invalid="ignore"):
                    score = np.where(norms > 0.0, dots / norms, -np.inf)
                j = int(np.argmax(score))
                if score[j] > best_score:
                    best_score = float(score[j])
                    best_col = lo + j
                    best_w = w
        current = (1.0 - best_w) * current + best_w * atoms[:, best_col]
        std = float(current.std())
        if std <= 0.0:
            raise DegenerateSelectionError("combination collapsed to zero variance")
        current /= std
        picks.append(best_col)
        mix.append(float(best_w))

    return MPSelection(tuple(picks), tuple(mix)), current


def brute_force_oracle(
    atoms: np.ndarray,
    residual: np.ndarray,
    m: int,
    quantization: QuantizationSet,
    *,
    max_candidates: int = 10**7,
) -> SparseSelection:
    """Exact minimizer of ||C s - r||^2 over all supports and coefficients.

    Pure enumeration, independent of the thresholding shortcut, so it can
    serve as ground truth.  Ties go to the lexicographically smallest
    (indices, coefficients) pair, which is the enumeration order.
    """
    d, K = atoms.shape
    if not 1 <= m <= K:
        raise ValueError(f"M={m} outside [1, {K}]")
    vals = quantization.values
    n_candidates = math.comb(K, m) * len(vals) ** m
    if n_candidates > max_candidates:
        raise SearchSpaceError(
            f"{n_candidates} candidates exceed the cap of {max_candidates}"
        )

    gram = atoms.T @ atoms
    corr = atoms.T @ residual
    base = float(residual @ residual)
    coef_rows = np.array(list(itertools.product(vals, repeat=m)))

    best_obj = np.inf
    best: tuple[tuple[int, ...], np.ndarray] | None = None
    for support in itertools.combinations(range(K), m):
        sup = list(support)
        sub_gram = gram[np.ix_(sup, sup)]
        sub_corr = corr[sup]
        objs = (
            np.einsum("ij,jk,ik->i", coef_rows, sub_gram, coef_rows)
            - 2.0 * coef_rows @ sub_corr
            + base
        )
        j = int(np.argmin(objs))
        if objs[j] < best_obj:
            best_obj = float(objs[j])
            best = (support, coef_rows[j])
    assert best is not None
    return SparseSelection(np.array(best[0]), best[1])
