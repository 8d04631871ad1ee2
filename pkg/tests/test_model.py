import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parnoise.model import (
    BENCHMARK_PHI,
    MIXTURE_SHAPE,
    NoiseSpec,
    ParSpec,
    Trajectory,
    benchmark_spec,
    empirical_snr,
    excess_kurtosis,
    sample_noise,
    simulate,
    stability_radius,
)
from parnoise.rng import as_generator, substream, substream_seed


class TestParSpec:
    def test_shape_and_accessor(self, spec_t2):
        assert (spec_t2.T, spec_t2.p) == (2, 1)
        assert spec_t2.coef(1, 1) == 0.4
        assert spec_t2.coef(1, 2) == -0.6
        assert spec_t2.coef(0, 1) == -1.0
        assert spec_t2.coef(2, 1) == 0.0

    @given(v=st.integers(-20, 20), j=st.integers(0, 3))
    def test_periodic_accessor(self, v, j):
        spec = benchmark_spec(3)
        assert spec.coef(j, v) == spec.coef(j, v + spec.T)

    def test_rejects_p_ge_T(self):
        with pytest.raises(ValueError, match="smaller than the period"):
            ParSpec(np.zeros((2, 2)))

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(ValueError):
            ParSpec([[0.1], [bad]])

    def test_rejects_nonpositive_innovation_variance(self):
        with pytest.raises(ValueError):
            ParSpec([[0.1], [0.2]], 0.0)

    def test_rotation(self):
        spec = ParSpec([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        np.testing.assert_array_equal(spec.rotated(1).phi, [[3, 4], [5, 6], [1, 2]])
        np.testing.assert_array_equal(spec.rotated(3).phi, spec.phi)

    def test_dict_roundtrip(self):
        spec = benchmark_spec(2)
        back = ParSpec.from_dict(spec.to_dict())
        np.testing.assert_array_equal(back.phi, spec.phi)
        assert back.sigma_xi2 == spec.sigma_xi2

    def test_benchmarks_are_period_four(self):
        for p, phi in BENCHMARK_PHI.items():
            assert phi.shape == (4, p)
            assert 0 < stability_radius(benchmark_spec(p)) < 1


class TestNoiseSpec:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            NoiseSpec.mixture((0.5, 0.4), (1.0, 2.0))

    def test_mixture_variances_positive(self):
        with pytest.raises(ValueError):
            NoiseSpec.mixture((0.5, 0.5), (0.0, 2.0))

    def test_gaussian_zero_variance_allowed(self):
        assert NoiseSpec.gaussian(0.0).total_variance == 0.0

    def test_mixture_shape_has_unit_variance(self):
        assert MIXTURE_SHAPE.total_variance == pytest.approx(1.0)

    def test_scaling(self):
        scaled = MIXTURE_SHAPE.scaled_to(2.0)
        np.testing.assert_allclose(scaled.variances, (1.0, 3.0))
        assert scaled.weights == MIXTURE_SHAPE.weights

    def test_cf(self, mixture_noise):
        u = np.array([0.0, 1.0, 2.5])
        expected = 0.5 * np.exp(-0.25 * u**2) + 0.5 * np.exp(-0.75 * u**2)
        np.testing.assert_allclose(mixture_noise.cf(u), expected, rtol=0, atol=1e-15)

    def test_dict_roundtrip(self, mixture_noise):
        assert NoiseSpec.from_dict(mixture_noise.to_dict()) == mixture_noise
        g = NoiseSpec.gaussian(0.2)
        assert NoiseSpec.from_dict(g.to_dict()) == g


class TestKurtosis:
    def test_gaussian_zero(self):
        assert excess_kurtosis(NoiseSpec.gaussian(2.0)) == 0.0

    def test_mixture_hand_value(self, mixture_noise):
        # 3 (0.5*0.25 + 0.5*2.25) / 1^2 - 3
        assert excess_kurtosis(mixture_noise) == pytest.approx(0.75, abs=1e-14)

    @given(st.floats(0.01, 100.0))
    def test_single_component_mixture(self, s2):
        assert excess_kurtosis(NoiseSpec.mixture((1.0,), (s2,))) == pytest.approx(0.0, abs=1e-12)


class TestSampling:
    def test_gaussian_variance(self):
        z = sample_noise(NoiseSpec.gaussian(1.0), 10**6, 1)
        assert abs(z.var() - 1.0) < 0.01

    def test_mixture_moments(self, mixture_noise):
        z = sample_noise(mixture_noise, 10**6, 2)
        assert abs(z.var() - 1.0) < 4 / math.sqrt(1e6) * 2
        kurt = np.mean(z**4) / np.mean(z**2) ** 2 - 3
        assert kurt == pytest.approx(0.75, abs=0.03)

    def test_rng_rejects_none(self):
        with pytest.raises((TypeError, ValueError)):
            as_generator(None)

    def test_substreams_distinct_and_stable(self):
        a = as_generator(substream(5, 0)).standard_normal(3)
        b = as_generator(substream(5, 1)).standard_normal(3)
        c = as_generator(substream(5, 0)).standard_normal(3)
        assert not np.allclose(a, b)
        np.testing.assert_array_equal(a, c)
        assert substream_seed(5, 1, 2) == substream_seed(5, 1, 2)
        assert substream_seed(5, 1, 2) != substream_seed(5, 2, 1)


class TestSimulate:
    def test_length_and_phase(self, spec_t2):
        traj = simulate(spec_t2, NoiseSpec.gaussian(1.0), 10, seed=0)
        assert isinstance(traj, Trajectory)
        assert len(traj) == 20 and traj.n_cycles == 10

    def test_white_noise_free(self):
        spec = ParSpec(np.zeros((2, 1)), 2.0)
        y = simulate(spec, NoiseSpec.gaussian(0.0), 100_000, seed=3).values
        assert abs(y.var() - 2.0) < 0.03
        assert abs(np.corrcoef(y[1:], y[:-1])[0, 1]) < 0.01

    def test_zero_noise_equals_pure_path(self):
        spec = benchmark_spec(2)
        a = simulate(spec, NoiseSpec.gaussian(0.0), 50, seed=9, keep_components=True)
        b = simulate(spec, NoiseSpec.gaussian(0.3), 50, seed=9, keep_components=True)
        np.testing.assert_array_equal(a.values, a.x)
        np.testing.assert_array_equal(a.x, b.x)

    def test_seed_determinism(self, spec_t2):
        noise = NoiseSpec.gaussian(1.0)
        a = simulate(spec_t2, noise, 30, seed=4).values
        b = simulate(spec_t2, noise, 30, seed=4).values
        c = simulate(spec_t2, noise, 30, seed=5).values
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_frozen_values(self, spec_t2):
        y = simulate(spec_t2, NoiseSpec.gaussian(1.0), 2, burn_in=0, seed=0, keep_components=True)
        # the recursion starts from zeros; innovations are the first draws of the stream
        x = y.x
        xi = as_generator(0).standard_normal(4)
        np.testing.assert_allclose(x, [xi[0], xi[1] - 0.6 * xi[0], xi[2] + 0.4 * x[1], xi[3] - 0.6 * (xi[2] + 0.4 * x[1])])

    def test_unstable_warns(self):
        spec = ParSpec([[1.0], [1.0]])
        assert stability_radius(spec) == pytest.approx(1.0)
        with pytest.warns(RuntimeWarning, match="not stable"):
            simulate(spec, NoiseSpec.gaussian(1.0), 5, seed=0)

    def test_stability_radius_zero(self):
        assert stability_radius(ParSpec(np.zeros((3, 2)))) == 0.0


class TestSnr:
    def test_white_signal(self):
        spec = ParSpec(np.zeros((2, 1)), 1.0)
        snr = empirical_snr(spec, NoiseSpec.gaussian(1.0), 4000, seed=1, burn_in=2)
        np.testing.assert_allclose(snr, 1.0, atol=0.1)

    def test_doubling_noise_halves_snr(self):
        spec = benchmark_spec(1)
        a = empirical_snr(spec, NoiseSpec.gaussian(1.0), 4000, seed=2, burn_in=20)
        b = empirical_snr(spec, NoiseSpec.gaussian(2.0), 4000, seed=2, burn_in=20)
        # same seeds -> same signal draws; noise draws scale exactly by sqrt(2)
        np.testing.assert_allclose(b, a / 2.0, rtol=1e-10)

    def test_rejects_zero_noise(self):
        with pytest.raises(ValueError):
            empirical_snr(benchmark_spec(1), NoiseSpec.gaussian(0.0), 100, seed=0)
