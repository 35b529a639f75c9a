"""Noise schedules and reverse-process update rules.

A schedule fixes the signal-retention sequence ᾱ_1 > ᾱ_2 > … > ᾱ_T for a
T-step process, with the conventions

    ᾱ_0 ≡ 1,   α_t = ᾱ_t / ᾱ_{t-1},   σ_t = sqrt(1 - α_t).

Steps run t = T, …, 1 and every update here is a pure function of its
arguments; the only randomness in the codec comes from the seeded streams
in :mod:`tdcm.rng`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng

SCHEDULE_LINEAR = 0
SCHEDULE_COSINE = 1
SCHEDULE_CUSTOM = -1

# Stream index reserved for the shared starting state x_T; codebooks use
# streams 2..T (one per step that injects noise).
INITIAL_STATE_STREAM = 0


@dataclass(frozen=True)
class DiffusionSchedule:
    """Validated ᾱ sequence plus the derived α_t and σ_t arrays.

    ``alpha_bar[t-1]`` holds ᾱ_t for t = 1..T.
    """

    alpha_bar: np.ndarray
    schedule_id: int = SCHEDULE_CUSTOM
    alpha: np.ndarray = field(init=False, repr=False)
    sigma: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.shape[0] < 2:
            raise ValueError("schedule needs at least 2 steps")
        if not (ab[-1] > 0.0 and ab[0] <= 1.0):
            raise ValueError("alpha_bar values must lie in (0, 1]")
        if not np.all(np.diff(ab) < 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")
        alpha = np.empty_like(ab)
        alpha[0] = ab[0]
        alpha[1:] = ab[1:] / ab[:-1]
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma", np.sqrt(1.0 - alpha))

    @property
    def T(self) -> int:
        return self.alpha_bar.shape[0]

    def check_step(self, t: int, *, minimum: int = 1) -> None:
        if not minimum <= t <= self.T:
            raise ValueError(f"step {t} outside [{minimum}, {self.T}]")

    def alpha_bar_at(self, t: int) -> float:
        """ᾱ_t with the ᾱ_0 ≡ 1 convention."""
        if t == 0:
            return 1.0
        return float(self.alpha_bar[t - 1])


def make_schedule(T: int, schedule_id: int = SCHEDULE_LINEAR) -> DiffusionSchedule:
    """Build one of the named schedules.

    id 0: ᾱ linear from 0.9999 down to 0.02.
    id 1: squared-cosine ᾱ with the usual 0.008 offset.
    """
    if T < 2:
        raise ValueError("T must be >= 2")
    if schedule_id == SCHEDULE_LINEAR:
        ab = np.linspace(0.9999, 0.02, T)
    elif schedule_id == SCHEDULE_COSINE:
        s = 0.008
        t = np.arange(1, T + 1, dtype=np.float64)
        f = np.cos((t / T + s) / (1.0 + s) * math.pi / 2.0) ** 2
        f0 = math.cos(s / (1.0 + s) * math.pi / 2.0) ** 2
        ab = np.clip(f / f0, 1e-8, 1.0 - 1e-8)
    else:
        raise ValueError(f"unknown schedule id {schedule_id}")
    return DiffusionSchedule(ab, schedule_id=schedule_id)


def _check_same_dim(*vecs: np.ndarray) -> None:
    dims = {v.shape for v in vecs}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")


def posterior_mean(
    x_t: np.ndarray, x0_hat: np.ndarray, t: int, sched: DiffusionSchedule
) -> np.ndarray:
    """Conditional mean of x_{t-1} given x_t and the clean-signal estimate.

    μ_t = [√ᾱ_{t-1} (1-α_t) / (1-ᾱ_t)] x̂_0 + [√α_t (1-ᾱ_{t-1}) / (1-ᾱ_t)] x_t
    """
    sched.check_step(t, minimum=2)
    _check_same_dim(x_t, x0_hat)
    ab_t = sched.alpha_bar_at(t)
    ab_prev = sched.alpha_bar_at(t - 1)
    denom = 1.0 - ab_t
    if denom <= 0.0:
        raise ValueError("degenerate schedule: alpha_bar_t == 1")
    a_t = sched.alpha[t - 1]
    c_hat = math.sqrt(ab_prev) * (1.0 - a_t) / denom
    c_xt = math.sqrt(a_t) * (1.0 - ab_prev) / denom
    return c_hat * x0_hat + c_xt * x_t


def codebook_step(
    x_t: np.ndarray,
    x0_hat: np.ndarray,
    z: np.ndarray,
    t: int,
    sched: DiffusionSchedule,
) -> np.ndarray:
    """One reverse step with a chosen (rather than sampled) noise vector.

    x_{t-1} = μ_t(x_t) + σ_t z.  The final step t=1 adds no noise and must
    not be taken through this function.
    """
    if t < 2:
        raise ValueError("no noise is injected at t=1")
    _check_same_dim(x_t, z)
    mu = posterior_mean(x_t, x0_hat, t, sched)
    return mu + sched.sigma[t - 1] * z


def ddim_step(
    x_t: np.ndarray, x0_hat: np.ndarray, t: int, sched: DiffusionSchedule
) -> np.ndarray:
    """Deterministic (noise-free) reverse update.

    x_{t-1} = √ᾱ_{t-1} x̂_0 + √(1-ᾱ_{t-1}) (x_t - √ᾱ_t x̂_0) / √(1-ᾱ_t)

    At t=1 (ᾱ_0 ≡ 1) this collapses to x̂_0.
    """
    sched.check_step(t)
    _check_same_dim(x_t, x0_hat)
    ab_t = sched.alpha_bar_at(t)
    ab_prev = sched.alpha_bar_at(t - 1)
    if 1.0 - ab_t <= 0.0:
        raise ValueError("degenerate schedule: alpha_bar_t == 1")
    eps = (x_t - math.sqrt(ab_t) * x0_hat) / math.sqrt(1.0 - ab_t)
    return math.sqrt(ab_prev) * x0_hat + math.sqrt(1.0 - ab_prev) * eps


def initial_state(seed: int, d: int) -> np.ndarray:
    """The shared standard-normal starting vector x_T, fixed by the seed."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return rng.normal_values(seed, INITIAL_STATE_STREAM, 0, d).astype(np.float64)
