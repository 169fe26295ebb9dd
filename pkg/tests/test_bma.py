import math
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparseunmix import bma
from sparseunmix.bma import (
    BmaConfig,
    bic_score,
    bic_weights,
    bma_ensemble,
    bma_unmix,
    enumerate_candidates,
    expand_quadratic,
)
from sparseunmix.errors import EnsembleError, IllPosedError, ValidationError
from sparseunmix.solvers import SolverSpec, solve
from sparseunmix.speclib import Pixel

from conftest import make_library


def softmax_oracle(bics):
    w = [math.exp(-b / 2.0) for b in bics]
    total = math.fsum(w)
    return [v / total for v in w]


def mixed_pixel(library, idx=(0, 14), weights=(0.6, 0.4), noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    y = library.matrix[:, list(idx)] @ np.asarray(weights)
    return Pixel("p", y + rng.normal(0, noise, y.size) if noise else y)


class TestBic:
    def test_unit_ratio_zero_params(self):
        assert bic_score(50.0, 50, 0) == 0.0

    def test_depends_only_on_rss_and_k(self):
        assert bic_score(0.3, 50, 2) == bic_score(0.3, 50, 2)

    def test_hand_computed_difference(self):
        W = 50
        rss2 = 0.2
        rss1 = rss2 * math.exp(-2.0 / W)
        diff = bic_score(rss1, W, 3) - bic_score(rss2, W, 3)
        assert diff == pytest.approx(-2.0, abs=1e-12)
        w = bic_weights([bic_score(rss1, W, 3), bic_score(rss2, W, 3)])
        assert w[0] / w[1] == pytest.approx(math.e, rel=1e-12)

    def test_zero_rss_is_floored(self):
        assert math.isfinite(bic_score(0.0, 50, 1))

    def test_rejects_zero_bands(self):
        with pytest.raises(ValidationError):
            bic_score(1.0, 0, 1)


class TestWeights:
    def test_symmetric_pair(self):
        np.testing.assert_array_equal(bic_weights([3.2, 3.2]), [0.5, 0.5])

    def test_three_models_match_softmax(self):
        W = 50
        bics = [bic_score(r, W, k) for r, k in [(0.010, 2), (0.011, 2), (0.008, 3)]]
        np.testing.assert_allclose(bic_weights(bics), softmax_oracle(bics), rtol=0, atol=1e-12)

    @given(st.lists(st.floats(-200, 200), min_size=1, max_size=30), st.floats(-1e4, 1e4))
    def test_sum_to_one_and_shift_invariant(self, bics, shift):
        w = bic_weights(bics, 1e-12)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(bic_weights(np.asarray(bics) - shift, 1e-12), w, atol=1e-12)

    @given(st.floats(1e-6, 10), st.floats(1e-6, 10), st.integers(0, 5))
    def test_smaller_rss_never_lighter(self, r1, r2, k):
        w = bic_weights([bic_score(r1, 50, k), bic_score(r2, 50, k)])
        if r1 < r2:
            assert w[0] >= w[1]

    def test_floor_drops_and_renormalizes(self):
        w = bic_weights([0.0, 100.0], floor=1e-12)
        np.testing.assert_array_equal(w, [1.0, 0.0])


class TestCandidates:
    @pytest.mark.parametrize("m, kmax, expected", [(3, 2, 6), (12, 3, 298), (16, 3, 696), (5, 1, 5)])
    def test_counts(self, library, m, kmax, expected):
        subsets = enumerate_candidates(library, library.matrix[:, 0], BmaConfig(pool_size=m, max_subset=kmax))
        assert len(subsets) == expected == sum(comb(m, k) for k in range(1, kmax + 1))
        assert len(set(subsets)) == expected

    def test_singletons_are_the_pool(self, library):
        y = library.matrix[:, 4]
        subsets = enumerate_candidates(library, y, BmaConfig(pool_size=6, max_subset=1))
        assert all(len(s) == 1 for s in subsets)
        assert (4,) in subsets

    def test_pool_clamped_to_library(self):
        lib = make_library(np.random.default_rng(0).uniform(0.1, 0.9, (10, 3)))
        subsets = enumerate_candidates(lib, lib.matrix[:, 0], BmaConfig(pool_size=12, max_subset=3))
        assert len(subsets) == 7

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            BmaConfig(pool_size=2, max_subset=3)
        with pytest.raises(ValidationError):
            BmaConfig(base=SolverSpec(kind="ols"))


class TestQuadratic:
    @pytest.mark.parametrize("n, expected", [(1, 2), (2, 5), (4, 14)])
    def test_column_counts(self, n, expected):
        X = np.random.default_rng(0).random((7, n))
        assert expand_quadratic(X).shape == (7, expected)

    def test_ordering(self):
        s1, s2 = np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.25, 2.0])
        X = expand_quadratic(np.column_stack([s1, s2]))
        np.testing.assert_array_equal(X, np.column_stack([s1, s2, s1 * s1, s1 * s2, s2 * s2]))

    def test_without_squares(self):
        X = np.random.default_rng(0).random((6, 3))
        assert expand_quadratic(X, include_squares=False).shape == (6, 6)

    def test_needs_a_column(self):
        with pytest.raises(ValidationError):
            expand_quadratic(np.zeros((5, 0)))


class TestUnmix:
    def test_weights_sum_to_one(self, library):
        members, failed = bma_ensemble(library, mixed_pixel(library, noise=0.004), BmaConfig())
        assert failed == 0
        assert math.fsum(m.weight for m in members) == pytest.approx(1.0, abs=1e-12)

    def test_weights_match_recomputation(self, library):
        members, _ = bma_ensemble(library, mixed_pixel(library, noise=0.004), BmaConfig(weight_floor=0.0))
        W = library.band_count
        bics = [bic_score(m.fit.rss, W, int(np.count_nonzero(m.fit.coefficients))) for m in members]
        assert [m.bic for m in members] == bics
        shift = min(bics)
        np.testing.assert_allclose([m.weight for m in members], softmax_oracle([b - shift for b in bics]),
                                   rtol=0, atol=1e-12)

    def test_single_candidate_is_base_fit_bitwise(self, library):
        pixel = mixed_pixel(library, noise=0.004)
        cfg = BmaConfig(pool_size=1, max_subset=1)
        res = bma_unmix(library, pixel, cfg)
        (j,) = enumerate_candidates(library, pixel.reflectance, cfg)[0]
        base = solve(library.matrix[:, [j]], pixel.reflectance, cfg.base)
        assert res.abundances[library.names[j]] == base.coefficients[0]
        assert res.inferred.tobytes() == (library.matrix[:, [j]] @ base.coefficients).tobytes()
        assert sum(v != 0 for v in res.abundances.values()) <= 1

    def test_abundance_within_member_range(self, library):
        pixel = mixed_pixel(library, noise=0.004)
        cfg = BmaConfig()
        members, _ = bma_ensemble(library, pixel, cfg)
        res = bma_unmix(library, pixel, cfg)
        for i, name in enumerate(library.names):
            per_model = [m.fit.coefficients[m.subset.index(i)] if i in m.subset else 0.0 for m in members]
            assert res.abundances[name] <= max(per_model) + 1e-12

    def test_inferred_is_weighted_average(self, library):
        pixel = mixed_pixel(library, noise=0.004)
        members, _ = bma_ensemble(library, pixel, BmaConfig())
        res = bma_unmix(library, pixel, BmaConfig())
        expected = sum(m.weight * (pixel.reflectance - m.fit.residual) for m in members)
        np.testing.assert_allclose(res.inferred, expected, atol=1e-12)
        assert res.rmse == pytest.approx(np.sqrt(np.mean((pixel.reflectance - res.inferred) ** 2)), abs=1e-12)

    def test_quadratic_false_reduces_to_linear_bitwise(self, library):
        pixel = mixed_pixel(library, noise=0.004)
        a = bma_unmix(library, pixel, BmaConfig(quadratic=False))
        b = bma_unmix(library, pixel, BmaConfig())
        assert a.abundances == b.abundances
        assert a.inferred.tobytes() == b.inferred.tobytes()

    def test_interactions_reported_separately(self, library):
        S = library.matrix
        y = 0.5 * S[:, 0] + 0.5 * S[:, 20] + 0.3 * S[:, 0] * S[:, 20]
        res = bma_unmix(library, Pixel("p", y), BmaConfig(quadratic=True))
        assert res.interactions
        assert all("*" in k for k in res.interactions)
        assert all("*" not in k for k in res.abundances)
        assert sum(res.abundances.values()) < 1.5

    def test_noiseless_recovery(self, library):
        res = bma_unmix(library, mixed_pixel(library, (3, 25), (0.7, 0.3)), BmaConfig())
        assert res.abundances[library.names[3]] == pytest.approx(0.7, abs=1e-4)
        assert res.abundances[library.names[25]] == pytest.approx(0.3, abs=1e-4)

    def test_all_fits_failing_raises(self, library, monkeypatch):
        def broken(*args, **kwargs):
            raise IllPosedError("synthetic failure")

        monkeypatch.setattr(bma, "solve", broken)
        with pytest.raises(EnsembleError, match="synthetic failure"):
            bma_unmix(library, mixed_pixel(library), BmaConfig(pool_size=2, max_subset=1))

    def test_failed_members_are_counted(self, library, monkeypatch):
        real = bma.solve

        def flaky(X, y, spec):
            if X.shape[1] == 2:
                raise IllPosedError("pair failure")
            return real(X, y, spec)

        monkeypatch.setattr(bma, "solve", flaky)
        res = bma_unmix(library, mixed_pixel(library), BmaConfig(pool_size=4, max_subset=2))
        assert res.diagnostics["n_failed"] == 6
        assert res.diagnostics["n_models"] <= 4
