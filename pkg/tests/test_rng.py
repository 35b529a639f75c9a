from __future__ import annotations

import numpy as np
import pytest

from tdcm import rng


def test_values_are_deterministic():
    a = rng.normal_values(7, 3, 0, 1000)
    b = rng.normal_values(7, 3, 0, 1000)
    assert a.dtype == np.float32
    assert np.array_equal(a, b)


def test_distinct_seeds_and_streams_differ():
    a = rng.normal_values(7, 3, 0, 64)
    assert not np.array_equal(a, rng.normal_values(8, 3, 0, 64))
    assert not np.array_equal(a, rng.normal_values(7, 4, 0, 64))


@pytest.mark.parametrize("start,count", [(0, 17), (1, 16), (3, 5), (10, 1), (999, 333)])
def test_random_access_slices_the_same_stream(start, count):
    full = rng.normal_values(42, 2, 0, 2048)
    part = rng.normal_values(42, 2, start, count)
    assert np.array_equal(part, full[start : start + count])


def test_any_chunking_is_bit_identical():
    whole = rng.normal_values(5, 9, 0, 1001)
    pieces = [rng.normal_values(5, 9, lo, hi - lo) for lo, hi in [(0, 7), (7, 512), (512, 1001)]]
    assert np.array_equal(np.concatenate(pieces), whole)


def test_matrix_layout_is_column_major_stream():
    mat = rng.normal_matrix(11, 4, rows=37, cols=9)
    flat = rng.normal_values(11, 4, 0, 37 * 9)
    assert np.array_equal(mat, flat.reshape(37, 9, order="F"))
    # single column = its stream slice
    col5 = rng.normal_values(11, 4, 5 * 37, 37)
    assert np.array_equal(mat[:, 5], col5)


@pytest.mark.parametrize("workers", [2, 3, 4])
def test_workers_do_not_change_bytes(workers):
    base = rng.normal_matrix(2, 6, rows=64, cols=31)
    assert np.array_equal(base, rng.normal_matrix(2, 6, rows=64, cols=31, workers=workers))


def test_moments_at_scale():
    vals = rng.normal_values(0, 2, 0, 1 << 20)
    assert abs(float(vals.mean())) < 0.01
    assert abs(float(vals.std()) - 1.0) < 0.01


def test_zero_and_negative_count():
    assert rng.normal_values(1, 1, 0, 0).size == 0
    with pytest.raises(ValueError):
        rng.normal_values(1, 1, 0, -1)
