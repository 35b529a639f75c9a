from __future__ import annotations

import numpy as np
import pytest

from tdcm import DiffusionSchedule, GaussianPrior, make_schedule


@pytest.fixture
def sched() -> DiffusionSchedule:
    return make_schedule(20, 0)


@pytest.fixture
def small_prior() -> GaussianPrior:
    return GaussianPrior.default_ramp(256)


@pytest.fixture
def gen() -> np.random.Generator:
    return np.random.default_rng(1234)
