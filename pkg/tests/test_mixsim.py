import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparseunmix.errors import ValidationError
from sparseunmix.mixsim import MixSpec, make_benchmark_roi, mix_bilinear, mix_linear, sample_abundances
from sparseunmix.solvers import solve_nnls


class TestMixLinear:
    def test_weighted_sum(self, library):
        a, b = library.names[0], library.names[10]
        pixel, truth = mix_linear(library, MixSpec(((a, 0.6), (b, 0.4))))
        expected = 0.6 * library[a].reflectance + 0.4 * library[b].reflectance
        np.testing.assert_array_equal(pixel.reflectance, expected)
        assert truth.constituents == ((a, 0.6), (b, 0.4))

    def test_single_constituent_identity(self, library):
        name = library.names[5]
        pixel, _ = mix_linear(library, MixSpec(((name, 1.0),)))
        np.testing.assert_array_equal(pixel.reflectance, library[name].reflectance)

    def test_empirical_snr(self, library):
        # 200 draws of 50 bands = 10000 noise samples
        name = library.names[0]
        signal = library[name].reflectance
        noise = np.concatenate([
            mix_linear(library, MixSpec(((name, 1.0),), snr_db=40.0, seed=s))[0].reflectance - signal
            for s in range(200)
        ])
        snr = 10 * np.log10(np.mean(signal**2) / np.mean(noise**2))
        assert abs(snr - 40.0) < 0.5

    def test_unknown_constituent(self, library):
        with pytest.raises(ValidationError, match="unknown constituent"):
            mix_linear(library, MixSpec((("unobtainium", 1.0),)))

    def test_negative_abundance(self):
        with pytest.raises(ValidationError):
            MixSpec((("a", -0.1),))

    def test_noiseless_mixture_recovered_by_nnls(self, library):
        rng = np.random.default_rng(0)
        for _ in range(20):
            idx = rng.choice(len(library), 3, replace=False)
            a = rng.dirichlet(np.ones(3))
            spec = MixSpec(tuple((library.names[i], float(v)) for i, v in zip(idx, a)))
            pixel, _ = mix_linear(library, spec)
            coef = solve_nnls(library.matrix, pixel.reflectance).coefficients
            np.testing.assert_allclose(coef[idx], a, atol=1e-6)


class TestMixBilinear:
    def test_zero_coefficients_match_linear(self, library):
        a, b = library.names[0], library.names[20]
        lin, _ = mix_linear(library, MixSpec(((a, 0.5), (b, 0.5)), snr_db=30.0, seed=4))
        bil, _ = mix_bilinear(
            library, MixSpec(((a, 0.5), (b, 0.5)), "bilinear", ((a, b, 0.0),), snr_db=30.0, seed=4)
        )
        np.testing.assert_array_equal(lin.reflectance, bil.reflectance)

    def test_interaction_isolated(self, library):
        a, b = library.names[1], library.names[30]
        lin, _ = mix_linear(library, MixSpec(((a, 0.3), (b, 0.7))))
        bil, truth = mix_bilinear(library, MixSpec(((a, 0.3), (b, 0.7)), "bilinear", ((a, b, 0.2),)))
        np.testing.assert_allclose(
            bil.reflectance - lin.reflectance, 0.2 * library[a].reflectance * library[b].reflectance, atol=1e-15
        )
        assert truth.interactions == ((a, b, 0.2),)

    @given(st.integers(0, 2**31), st.floats(0.0, 1.0), st.floats(0.0, 0.5))
    def test_bitwise_deterministic(self, seed, a, b):
        from sparseunmix.speclib import load_bundled_library

        lib = load_bundled_library()
        spec = MixSpec(((lib.names[2], a), (lib.names[9], 1 - a)), "bilinear",
                       ((lib.names[2], lib.names[9], b),), snr_db=35.0, seed=seed)
        first, second = mix_bilinear(lib, spec)[0], mix_bilinear(lib, spec)[0]
        assert first.reflectance.tobytes() == second.reflectance.tobytes()


class TestSampleAbundances:
    @given(st.integers(1, 6), st.integers(0, 2**31), st.floats(0.0, 0.15))
    def test_on_simplex(self, k, seed, floor):
        a = sample_abundances(k, np.random.default_rng(seed), floor)
        assert a.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(a >= floor - 1e-15)

    def test_infeasible_floor(self):
        with pytest.raises(ValidationError):
            sample_abundances(3, np.random.default_rng(0), 0.4)


class TestBenchmarkRoi:
    def test_empty(self, library):
        roi, truth = make_benchmark_roi(library, n_pixels=0)
        assert len(roi) == 0 and truth == []

    def test_complexity_two_includes_target(self, library):
        roi, truth = make_benchmark_roi(library, n_pixels=100, complexity=2, seed=3)
        assert len(roi) == 100
        for t in truth:
            assert len(t.constituents) == 2
            assert sum("alunite" in n for n in t.names) == 1
            assert sum(a for _, a in t.constituents) == pytest.approx(1.0, abs=1e-12)

    def test_complexity_range(self, library):
        _, truth = make_benchmark_roi(library, n_pixels=60, complexity=(2, 3), seed=3)
        sizes = {len(t.constituents) for t in truth}
        assert sizes == {2, 3}

    def test_deterministic(self, library):
        r1, t1 = make_benchmark_roi(library, n_pixels=20, complexity=(2, 3), seed=9)
        r2, t2 = make_benchmark_roi(library, n_pixels=20, complexity=(2, 3), seed=9)
        assert t1 == t2
        for p, q in zip(r1, r2):
            assert p.id == q.id and p.reflectance.tobytes() == q.reflectance.tobytes()

    def test_seed_changes_output(self, library):
        r1, _ = make_benchmark_roi(library, n_pixels=5, seed=1)
        r2, _ = make_benchmark_roi(library, n_pixels=5, seed=2)
        assert not np.array_equal(r1.pixels[0].reflectance, r2.pixels[0].reflectance)

    def test_bilinear_records_every_pair(self, library):
        _, truth = make_benchmark_roi(library, n_pixels=10, complexity=3, mixing_kind="bilinear",
                                      bilinear_coef=0.3, seed=2)
        for t in truth:
            assert t.mixing_kind == "bilinear"
            assert len(t.interactions) == 3
            assert all(b == 0.3 for *_, b in t.interactions)

    @pytest.mark.parametrize("kw", [{"complexity": 0}, {"complexity": (3, 2)}, {"target": "unobtainium"},
                                    {"mixing_kind": "hapke"}, {"n_pixels": -1}])
    def test_invalid(self, library, kw):
        with pytest.raises(ValidationError):
            make_benchmark_roi(library, **kw)
