"""Process primitives: quantile transform, fBm, predator-prey ODE, VAR prior."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from npebench.errors import DomainError, StationarityError
from npebench.sim.processes import (companion_matrix, fbm_covariance,
                                    fbm_sample_path, gk_quantile, lv_integrate,
                                    spectral_radius, var_sample_coefficients)


class TestGkQuantile:
    def test_reduces_to_normal_for_zero_g_and_k(self):
        u = np.linspace(0.01, 0.99, 99)
        assert np.allclose(gk_quantile(u, 1.5, 2.0, 0.0, 0.0),
                           1.5 + 2.0 * stats.norm.ppf(u))

    def test_median_is_location(self):
        for a, b, g, k in [(0.0, 1.0, 1.0, 0.5), (-2.0, 3.0, -0.7, 1.2)]:
            assert gk_quantile(0.5, a, b, g, k) == pytest.approx(a, abs=1e-12)

    def test_reference_value(self):
        # direct evaluation at z = 1 (u = Phi(1)), a=0 b=1 g=1 k=0.5 c=0.8
        u = stats.norm.cdf(1.0)
        assert gk_quantile(u, 0.0, 1.0, 1.0, 0.5) == pytest.approx(1.937039, abs=1e-5)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            gk_quantile(0.0, 0, 1, 0, 0)
        with pytest.raises(DomainError):
            gk_quantile(1.0, 0, 1, 0, 0)
        with pytest.raises(DomainError):
            gk_quantile(0.5, 0, -1.0, 0, 0)
        with pytest.raises(DomainError):
            gk_quantile(0.5, 0, 1.0, 0, -0.6)

    @given(a=st.floats(-5, 5), b=st.floats(0.05, 5), g=st.floats(-4, 4),
           k=st.floats(0, 3))
    @settings(max_examples=200, deadline=None)
    def test_monotone_on_prior_support(self, a, b, g, k):
        u = np.linspace(1e-4, 1 - 1e-4, 300)
        q = gk_quantile(u, a, b, g, k)
        assert np.all(np.diff(q) > 0)


class TestFbm:
    def test_unit_time_variance(self):
        for h in (0.2, 0.5, 0.8):
            assert fbm_covariance(np.array([1.0]), h)[0, 0] == pytest.approx(1.0)

    def test_closed_form_entry(self):
        c = fbm_covariance(np.array([1.0, 2.0]), 0.8)
        assert c[0, 1] == pytest.approx(2 ** 0.6)

    def test_half_hurst_has_independent_increments(self, rng):
        t = np.linspace(0.1, 25.6, 256)
        incs = np.array([np.diff(fbm_sample_path(0.5, t, rng))
                         for _ in range(200)])
        lag1 = np.mean([np.corrcoef(p[:-1], p[1:])[0, 1] for p in incs])
        assert abs(lag1) < 3 / np.sqrt(incs.shape[1] * 200 / 10)

    def test_empirical_covariance_matches_closed_form(self, rng):
        t = np.array([1.0, 2.0])
        paths = np.array([fbm_sample_path(0.8, t, rng) for _ in range(10_000)])
        emp = np.mean(paths[:, 0] * paths[:, 1])
        assert emp == pytest.approx(2 ** 0.6, rel=0.05)

    def test_rejects_bad_grids(self, rng):
        with pytest.raises(DomainError):
            fbm_sample_path(0.5, np.array([0.0, 1.0]), rng)
        with pytest.raises(DomainError):
            fbm_sample_path(0.5, np.array([2.0, 1.0]), rng)
        with pytest.raises(DomainError):
            fbm_sample_path(1.5, np.array([1.0, 2.0]), rng)


class TestLotkaVolterra:
    def test_decoupled_exponentials(self):
        t = np.linspace(0.0, 2.0, 21)
        traj = lv_integrate(0.8, 0.0, 0.3, 0.0, (5.0, 2.0), t)
        assert np.allclose(traj[:, 0], 5.0 * np.exp(0.8 * t), rtol=1e-6)
        assert np.allclose(traj[:, 1], 2.0 * np.exp(-0.3 * t), rtol=1e-6)

    def test_equilibrium_is_fixed_point(self):
        a, b, g, d = 0.9, 0.05, 0.3, 0.02
        x0 = (g / d, a / b)
        traj = lv_integrate(a, b, g, d, x0, np.linspace(0, 10, 101))
        assert np.max(np.abs(traj - np.array(x0))) < 1e-8

    def test_conserved_quantity_drift(self):
        a, b, g, d = 0.8, 0.05, 0.3, 0.02
        t = np.arange(401) * 0.1
        traj = lv_integrate(a, b, g, d, (30.0, 1.0), t)
        x, y = traj[:, 0], traj[:, 1]
        v = d * x - g * np.log(x) + b * y - a * np.log(y)
        assert np.max(np.abs(v - v[0])) / abs(v[0]) < 1e-4

    def test_agrees_with_half_step_run(self):
        t = np.arange(201) * 0.1
        full = lv_integrate(0.9, 0.08, 0.4, 0.03, (30.0, 1.0), t, substeps=4)
        half = lv_integrate(0.9, 0.08, 0.4, 0.03, (30.0, 1.0), t, substeps=8)
        rel = np.max(np.abs(full - half) / np.maximum(np.abs(half), 1e-9))
        assert rel < 1e-6

    def test_rejects_nonpositive_start(self):
        with pytest.raises(DomainError):
            lv_integrate(0.8, 0.05, 0.3, 0.02, (0.0, 1.0), np.linspace(0, 1, 5))


class TestVarPrior:
    def test_spectral_radius_below_one(self, rng):
        for _ in range(100):
            gammas, sigma = var_sample_coefficients(0.45, 0.25, 3, 2, rng)
            assert spectral_radius(companion_matrix(gammas)) < 1.0
            assert np.allclose(sigma, np.diag(np.diag(sigma)))
            assert np.all(np.diag(sigma) > 0)

    def test_zero_coefficients_are_stable(self):
        assert spectral_radius(companion_matrix(np.zeros((2, 3, 3)))) == 0.0

    def test_lag_decaying_means(self, rng):
        # entries at lag h have mean tau / h before shrinkage; with these
        # shrinkage settings nearly all draws are already stationary
        draws = np.array([var_sample_coefficients(0.45, 0.02, 2, 2, rng)[0]
                          for _ in range(10_000)])
        se = 0.02 / np.sqrt(10_000)
        assert draws[:, 0].mean() == pytest.approx(0.45, abs=4 * se + 1e-3)
        assert draws[:, 1].mean() == pytest.approx(0.225, abs=4 * se / 2 + 1e-3)

    def test_shrinkage_failure_surfaces(self, rng):
        with pytest.raises(StationarityError):
            var_sample_coefficients(50.0, 0.1, 2, 2, rng,
                                    shrink_factor=1.0, max_steps=5)
