from __future__ import annotations

import math

import numpy as np
import pytest

from tdcm import CapacityError, Codebook, gram_schmidt, orthogonality_report


class TestAtoms:
    def test_bit_identical_regeneration(self):
        a = Codebook(5, 128, 32, 10).atoms(3)
        b = Codebook(5, 128, 32, 10).atoms(3)
        assert np.array_equal(a, b)
        assert a.dtype == np.float64

    def test_steps_differ(self):
        cb = Codebook(5, 64, 16, 10)
        assert not np.array_equal(cb.atoms(2), cb.atoms(3))

    def test_dtype_float32_is_the_native_stream(self):
        cb32 = Codebook(5, 64, 16, 10, dtype=np.float32)
        cb64 = Codebook(5, 64, 16, 10)
        a32, a64 = cb32.atoms(4), cb64.atoms(4)
        assert a32.dtype == np.float32
        assert np.array_equal(a32.astype(np.float64), a64)  # exact upcast

    def test_out_of_range_step(self):
        cb = Codebook(5, 64, 16, 10)
        for t in (0, 1, 11):
            with pytest.raises(ValueError):
                cb.atoms(t)

    def test_capacity_cap(self):
        cb = Codebook(5, 1024, 1024, 10, max_entries=1000)
        with pytest.raises(CapacityError):
            cb.atoms(2)

    @pytest.mark.parametrize("workers", [2, 4])
    def test_worker_invariance(self, workers):
        base = Codebook(9, 257, 33, 5).atoms(2)
        multi = Codebook(9, 257, 33, 5, workers=workers).atoms(2)
        assert np.array_equal(base, multi)

    def test_cache_returns_same_object(self):
        cb = Codebook(5, 64, 16, 10, cache=True)
        assert cb.atoms(2) is cb.atoms(2)
        first = cb.atoms(2)
        cb.atoms(3)
        assert cb.atoms(2) is not first  # only the latest step is kept

    def test_column_norm_concentration(self):
        # |norm - sqrt(d)| <= 4 at d=1024 (far beyond 6 sigma of chi_d)
        cb = Codebook(3, 1024, 64, 5)
        norms = np.linalg.norm(cb.atoms(2), axis=0)
        assert np.max(np.abs(norms - math.sqrt(1024))) <= 4.0

    def test_mean_pairwise_cosine_large_d(self):
        # E|cos| ~ sqrt(2/(pi*d)); generous 2x bound at d=16384
        cb = Codebook(0, 16384, 256, 5, dtype=np.float32)
        stats = orthogonality_report(cb.atoms(2), max_pairs=1500)
        assert stats.mean_abs_cosine <= 0.012


class TestGramSchmidt:
    def test_textbook_two_columns(self):
        c = np.array([[1.0, 1.0], [0.0, 1.0]])
        q = gram_schmidt(c)
        # first column keeps its direction, second becomes (0,1); norms sqrt(2)
        assert np.allclose(q[:, 0], [math.sqrt(2), 0.0])
        assert np.allclose(q[:, 1], [0.0, math.sqrt(2)])

    def test_orthogonal_input_unchanged_up_to_scale(self):
        d = 8
        c = np.eye(d)[:, :4] * 3.7
        q = gram_schmidt(c)
        assert np.allclose(q, np.eye(d)[:, :4] * math.sqrt(d))

    def test_gram_offdiagonal_small(self):
        gen = np.random.default_rng(0)
        c = gen.standard_normal((256, 64))
        q = gram_schmidt(c)
        gram = q.T @ q
        off = gram - np.diag(np.diag(gram))
        assert np.max(np.abs(off)) <= 1e-6 * 256
        assert np.allclose(np.linalg.norm(q, axis=0), math.sqrt(256))

    def test_rejects_wide_matrices(self):
        with pytest.raises(ValueError):
            gram_schmidt(np.ones((4, 5)))

    def test_sign_convention_follows_original_atom(self):
        gen = np.random.default_rng(1)
        c = gen.standard_normal((64, 8))
        q = gram_schmidt(c)
        assert np.all(np.einsum("ij,ij->j", q, c) > 0)


class TestOrthogonalityReport:
    def test_orthogonalized_codebook_is_flat(self):
        cb = Codebook(2, 256, 32, 5)
        stats = orthogonality_report(cb.gram_schmidt(2))
        assert stats.mean_abs_cosine <= 1e-8

    def test_single_atom_degenerate(self):
        cb = Codebook(2, 64, 1, 5)
        stats = cb.orthogonality_report(2)
        assert stats.pairs_sampled == 0
        assert math.isnan(stats.mean_abs_cosine)
        assert stats.norm_mean > 0

    def test_raw_gaussian_matches_half_normal_prediction(self):
        d = 4096
        cb = Codebook(4, d, 128, 5)
        stats = cb.orthogonality_report(2)
        predicted = math.sqrt(2.0 / (math.pi * d))
        assert 0.5 * predicted <= stats.mean_abs_cosine <= 2.0 * predicted
