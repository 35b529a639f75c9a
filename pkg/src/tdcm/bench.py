"""Selector benchmarks: wall time and approximation quality as CSV reports.

Cells run sequentially so timings are honest on a busy machine; codebooks
are reused across cells that share (K, d), since regenerating them would
dwarf what is being measured.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import rng
from .codebook import DEFAULT_MAX_ENTRIES, CapacityError
from .selection import (
    QuantizationSet,
    combine_and_normalize,
    mp_select,
    residual_angle,
    threshold_select_sign,
)

CSV_HEADER = "selector,K,M,C,d,trial,wall_time_ns,angle_rad"

_BENCH_STREAM_BASE = 1000  # keep bench streams clear of codec streams


@dataclass(frozen=True)
class BenchRow:
    selector: str
    K: int
    M: int
    C: int
    d: int
    trial: int
    wall_time_ns: int
    angle_rad: float


def rows_to_csv(rows: Sequence[BenchRow]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r.selector},{r.K},{r.M},{r.C},{r.d},{r.trial},{r.wall_time_ns},{r.angle_rad:.9f}"
        )
    return "\n".join(lines) + "\n"


def median_time_ns(fn, repeats: int = 5) -> tuple[int, object]:
    """Median wall time of >= 1 repeats after one warm-up call."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    result = fn()  # warm-up, also the returned value
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        t1 = time.perf_counter_ns()
        samples.append(t1 - t0)
    samples.sort()
    return samples[len(samples) // 2], result


def _bench_matrix(seed: int, d: int, K: int, dtype) -> np.ndarray:
    if d * K > DEFAULT_MAX_ENTRIES:
        raise CapacityError(f"{d}x{K} bench matrix exceeds {DEFAULT_MAX_ENTRIES} entries")
    mat = rng.normal_matrix(seed, _BENCH_STREAM_BASE, d, K)
    return mat if dtype == np.float32 else mat.astype(dtype)


def _bench_residual(seed: int, d: int, trial: int, dtype) -> np.ndarray:
    r = rng.normal_values(seed, _BENCH_STREAM_BASE + 1 + trial, 0, d)
    return r if dtype == np.float32 else r.astype(dtype)


def _run_threshold(atoms: np.ndarray, r: np.ndarray, M: int, positive_only: bool):
    u = atoms.T @ r
    if positive_only:
        # M=1 comparison cell: restrict to +1 coefficients so the pick rule
        # coincides with matching pursuit's first step, arithmetic included
        col = atoms[:, int(np.argmax(u))]
        return col / col.std()
    return combine_and_normalize(atoms, threshold_select_sign(u, M))


def bench_selection(
    cells: Iterable[dict],
    *,
    trials: int = 1,
    seed: int = 0,
    repeats: int = 5,
    dtype=np.float32,
    selectors: Sequence[str] = ("thresholding", "mp"),
) -> list[BenchRow]:
    """Time both selectors over a grid of {K, M, C, d} cells.

    Each cell dict carries K, M, C, d.  A capacity failure in one cell is
    recorded by skipping it; remaining cells still run.
    """
    rows: list[BenchRow] = []
    cache: tuple[tuple, np.ndarray] | None = None
    for cell in cells:
        K, M, C, d = cell["K"], cell["M"], cell["C"], cell["d"]
        try:
            key = (d, K, dtype)
            if cache is None or cache[0] != key:
                cache = (key, _bench_matrix(seed, d, K, dtype))
            atoms = cache[1]
            weights = QuantizationSet.unit_interval(max(C, 2))
            for trial in range(trials):
                r = _bench_residual(seed, d, trial, dtype)
                if "thresholding" in selectors:
                    ns, z = median_time_ns(
                        lambda: _run_threshold(atoms, r, M, positive_only=(M == 1)),
                        repeats,
                    )
                    rows.append(
                        BenchRow("thresholding", K, M, C, d, trial, ns, residual_angle(z, r))
                    )
                if "mp" in selectors:
                    ns, (_, z) = median_time_ns(
                        lambda: mp_select(atoms, r, M, weights), repeats
                    )
                    rows.append(BenchRow("mp", K, M, C, d, trial, ns, residual_angle(z, r)))
        except CapacityError:
            continue
    return rows


def angle_study(
    K: int,
    d: int,
    m_values: Sequence[int],
    c_values: Sequence[int],
    *,
    trials: int = 50,
    seed: int = 0,
    include_mp: bool = True,
) -> list[BenchRow]:
    """Mean-angle comparison grid; residuals are paired across cells.

    Every (selector, M, C) cell sees the same ``trials`` residuals, so
    curve differences are not noise from resampling.
    """
    atoms = _bench_matrix(seed, d, K, np.float32)
    residuals = [_bench_residual(seed, d, i, np.float32) for i in range(trials)]
    rows: list[BenchRow] = []
    for C in c_values:
        weights = QuantizationSet.unit_interval(max(C, 2))
        for M in m_values:
            for trial, r in enumerate(residuals):
                t0 = time.perf_counter_ns()
                z = _run_threshold(atoms, r, M, positive_only=(M == 1))
                t1 = time.perf_counter_ns()
                rows.append(
                    BenchRow("thresholding", K, M, C, d, trial, t1 - t0, residual_angle(z, r))
                )
                if include_mp:
                    t0 = time.perf_counter_ns()
                    _, zm = mp_select(atoms, r, M, weights)
                    t1 = time.perf_counter_ns()
                    rows.append(
                        BenchRow("mp", K, M, C, d, trial, t1 - t0, residual_angle(zm, r))
                    )
    return rows


def mean_angles(rows: Sequence[BenchRow]) -> dict[tuple[str, int, int], float]:
    """Aggregate rows into {(selector, M, C): mean angle}."""
    sums: dict[tuple[str, int, int], list[float]] = {}
    for r in rows:
        sums.setdefault((r.selector, r.M, r.C), []).append(r.angle_rad)
    return {k: float(np.mean(v)) for k, v in sums.items()}
