"""Distortion-targeted bitrate selection.

At a fixed bitrate the achieved PSNR varies a lot between images, but the
deviation is predictable from how hard the image is for *any* codec.  A
cheap reference compressor supplies a complexity score; a per-bitrate
linear regression from score to PSNR then picks, for a requested target
PSNR, the cheapest configuration predicted to reach it.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_PROVIDER = "deflate-raw-v1"


class DegenerateFitError(Exception):
    """A configuration's scores are constant; no line can be fitted."""


@dataclass(frozen=True)
class RateEntry:
    config_id: int
    slope: float
    intercept: float
    mean_psnr: float

    def predict(self, score: float) -> float:
        return self.slope * score + self.intercept


@dataclass(frozen=True)
class RateModel:
    entries: tuple[RateEntry, ...]
    provider: str = DEFAULT_PROVIDER

    def __post_init__(self):
        if not self.entries:
            raise ValueError("model needs at least one entry")
        ids = [e.config_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate config ids")
        object.__setattr__(
            self, "entries", tuple(sorted(self.entries, key=lambda e: e.config_id))
        )


def fit(
    rows: Iterable[tuple[int, float, float]], provider: str = DEFAULT_PROVIDER
) -> RateModel:
    """Ordinary least squares of PSNR on complexity score, per config.

    Rows are (config_id, score, observed_psnr); every config needs at
    least two rows with non-constant scores.
    """
    grouped: dict[int, list[tuple[float, float]]] = {}
    for cid, score, psnr_val in rows:
        grouped.setdefault(int(cid), []).append((float(score), float(psnr_val)))
    entries = []
    for cid, pts in sorted(grouped.items()):
        scores = np.array([p[0] for p in pts])
        psnrs = np.array([p[1] for p in pts])
        if len(pts) < 2 or np.ptp(scores) == 0.0:
            raise DegenerateFitError(f"config {cid}: constant or insufficient scores")
        slope, intercept = np.polyfit(scores, psnrs, 1)
        entries.append(RateEntry(cid, float(slope), float(intercept), float(psnrs.mean())))
    return RateModel(tuple(entries), provider)


def select_bitrate(model: RateModel, score: float, target_psnr: float) -> int:
    """Cheapest config predicted to reach the target.

    Among configs whose predicted PSNR is at least the target, pick the
    one with the smallest prediction (ties to the lower config id).  If
    none qualifies, fall back to the highest-predicted config.
    """
    preds = [(e.predict(score), e.config_id) for e in model.entries]
    qualifying = [(p, cid) for p, cid in preds if p >= target_psnr]
    if qualifying:
        return min(qualifying)[1]
    return max(preds, key=lambda pc: (pc[0], -pc[1]))[1]


def select_bitrate_naive(model: RateModel, target_psnr: float) -> int:
    """Image-independent baseline: nearest mean PSNR to the target."""
    return min(
        model.entries, key=lambda e: (abs(e.mean_psnr - target_psnr), e.config_id)
    ).config_id


def complexity_score(image: np.ndarray, provider: str = DEFAULT_PROVIDER) -> int:
    """Reference-compressor byte size of a raster, used as the difficulty proxy.

    The default provider deflates the raw 8-bit pixels at maximum effort;
    it is deterministic and needs no external codec.
    """
    if provider != DEFAULT_PROVIDER:
        raise ValueError(f"unknown complexity provider {provider!r}")
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(np.asarray(arr, dtype=np.float64)), 0, 255).astype(np.uint8)
    return len(zlib.compress(arr.tobytes(), level=9))


def filter_outliers(
    rows: Sequence[tuple[int, float, float]], quantile: float = 0.96
) -> list[tuple[int, float, float]]:
    """Drop rows whose score exceeds the given quantile (hardest images)."""
    if not rows:
        return []
    scores = np.array([r[1] for r in rows])
    cutoff = float(np.quantile(scores, quantile))
    return [r for r in rows if r[1] <= cutoff]


def save_model(model: RateModel, path) -> None:
    """One line per config: config_id,slope,intercept,mean_psnr."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"provider,{model.provider}\n")
        for e in model.entries:
            fh.write(f"{e.config_id},{e.slope!r},{e.intercept!r},{e.mean_psnr!r}\n")


def load_model(path) -> RateModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("provider,"):
        raise ValueError("model file must start with a provider line")
    provider = lines[0].split(",", 1)[1]
    entries = []
    for ln in lines[1:]:
        cid, slope, intercept, mean_psnr = ln.split(",")
        entries.append(RateEntry(int(cid), float(slope), float(intercept), float(mean_psnr)))
    return RateModel(tuple(entries), provider)
