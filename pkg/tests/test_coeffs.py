import math

import numpy as np
import pytest
from scipy.integrate import quad

from randkdv import bottom, coeffs
from randkdv.spectral import SpectralGrid

GAUSS = bottom.GaussianSpectralSpec(sigma=0.7, ell=1.0)
PARAMS = coeffs.PhysicalParams(h=1.0, g=1.0, eps=0.05)


def gauss_spectrum(k):
    return GAUSS.spectrum_deriv(k, 0)


class TestPhysicalParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            coeffs.PhysicalParams(h=-1.0, g=1.0, eps=0.1)
        with pytest.raises(ValueError):
            coeffs.PhysicalParams(h=1.0, g=1.0, eps=0.3)

    def test_c1_c2_at_unit_depth_gravity(self):
        c1, c2 = coeffs.c1_c2(PARAMS)
        assert c1 == pytest.approx(1.0 / 6.0, abs=1e-12)
        assert c2 == pytest.approx(0.25**0.25 / 2.0, abs=1e-7)


class TestABeta:
    def test_flat_bottom_zero(self):
        assert coeffs.a_beta_from_spectrum(lambda k: 0.0 * k, 1.0) == 0.0

    def test_quadrature_routes_agree(self):
        # analytic spectrum route vs sampled-covariance route
        ab = coeffs.a_beta_from_spectrum(gauss_spectrum, 1.0)
        st = bottom.analytic_stats(GAUSS, max_lag=12.0, n_lags=1024)
        ab2 = coeffs.a_beta_from_cov(st.lags, st.rho, 1.0)
        assert ab2 == pytest.approx(ab, rel=1e-6)

    def test_realization_route_agrees_within_3se(self):
        ab = coeffs.a_beta_from_spectrum(gauss_spectrum, 1.0)
        vals, ses = [], []
        for s in range(6):
            real = bottom.sample(GAUSS, 4000.0, 2**15, seed=s)
            est, se = coeffs.a_beta_from_realization(real, 1.0)
            vals.append(est)
            ses.append(se)
        se_mean = np.std(vals) / math.sqrt(len(vals))
        assert abs(np.mean(vals) - ab) < 3 * se_mean

    def test_deep_water_limit(self):
        # h -> infinity with fixed covariance approaches the |k| symbol
        ab = coeffs.a_beta_from_spectrum(gauss_spectrum, 50.0)
        target = quad(lambda k: k * gauss_spectrum(k), 0, np.inf)[0] / math.pi
        assert abs(ab - target) / target < 0.01

    def test_linearity_in_covariance_amplitude(self):
        ab = coeffs.a_beta_from_spectrum(gauss_spectrum, 1.0)
        double = bottom.GaussianSpectralSpec(sigma=GAUSS.sigma * math.sqrt(2), ell=1.0)
        ab2 = coeffs.a_beta_from_spectrum(lambda k: double.spectrum_deriv(k, 0), 1.0)
        assert abs(ab2 - 2 * ab) < 1e-10 * abs(2 * ab)


class TestTheorem57:
    def test_flat_bottom_constants_vanish(self):
        zero = bottom.GaussianSpectralSpec(sigma=0.0, ell=1.0)
        stats = bottom.analytic_stats(zero)
        eff = coeffs.theorem57_constants(stats, PARAMS, a_beta=0.0)
        assert eff.a_kdv == 0.0
        assert eff.b == 0.0

    def test_gaussian_b_is_zero(self):
        stats = bottom.analytic_stats(GAUSS)
        eff = coeffs.theorem57_constants(stats, PARAMS)
        assert eff.b == 0.0

    def test_skewed_b_formula(self):
        spec = bottom.SkewedMASpec(sigma=0.5, ell=1.0, delta=0.5, tilt=0.5)
        stats = bottom.analytic_stats(spec)
        eff = coeffs.theorem57_constants(stats, PARAMS)
        c1, _ = coeffs.c1_c2(PARAMS)
        expected = -7 * c1 * stats.d3 / 64.0
        assert eff.b == pytest.approx(expected, rel=1e-12)
        assert eff.b != 0.0

    def test_arithmetic_identity_enforced(self):
        stats = bottom.analytic_stats(GAUSS)
        eff = coeffs.theorem57_constants(stats, PARAMS)
        with pytest.raises(ValueError, match="inconsistent"):
            coeffs.EffectiveCoefficients(
                c1=eff.c1,
                c2=eff.c2,
                a_beta=eff.a_beta,
                a_kdv=eff.a_kdv + 1e-3,
                b=eff.b,
                sigma_beta=eff.sigma_beta,
                stats=stats,
                params=PARAMS,
            )

    def test_estimated_stats_route(self):
        # estimator-based stats give constants within a few bootstrap SEs
        real = bottom.sample(GAUSS, 4000.0, 2**15, seed=11)
        est = bottom.estimate_stats(real, max_lag=15.0, n_bootstrap=40)
        eff_est = coeffs.theorem57_constants(est, PARAMS)
        eff_true = coeffs.theorem57_constants(bottom.analytic_stats(GAUSS), PARAMS)
        c1, _ = coeffs.c1_c2(PARAMS)
        se = (
            est.se_m2 / (4 * PARAMS.h**2)
            + 3 * c1 * est.se_d2 / (8 * PARAMS.h**2 * PARAMS.c0)
            + 0.05 * abs(eff_true.a_kdv)
        )
        assert abs(eff_est.a_kdv - eff_true.a_kdv) < 4 * se


class TestCoefficientFields:
    def make_fields(self, seed=3, eps=0.05, sigma=0.7):
        spec = bottom.GaussianSpectralSpec(sigma=sigma, ell=1.0)
        params = coeffs.PhysicalParams(h=1.0, g=1.0, eps=eps)
        stats = bottom.analytic_stats(spec)
        eff = coeffs.theorem57_constants(stats, params)
        grid = SpectralGrid(8.0, 256)
        real = bottom.sample(spec, grid.length / eps, 2**12, seed=seed)
        return coeffs.coefficient_fields(real, eff, params, grid), eff, params

    def test_flat_bottom_constant_speed(self):
        spec = bottom.GaussianSpectralSpec(sigma=0.0, ell=1.0)
        params = PARAMS
        stats = bottom.analytic_stats(spec)
        eff = coeffs.theorem57_constants(stats, params, a_beta=0.0)
        grid = SpectralGrid(8.0, 256)
        real = bottom.sample(spec, grid.length / params.eps, 2**12, seed=0)
        cf = coeffs.coefficient_fields(real, eff, params, grid)
        target = params.c0 * (1 - params.eps**2 * eff.a_kdv)
        assert np.allclose(cf.c_eps, target, rtol=0, atol=1e-14)

    def test_amplitude_guard(self):
        spec = bottom.GaussianSpectralSpec(sigma=1.0, ell=1.0)
        params = coeffs.PhysicalParams(h=1.0, g=1.0, eps=0.25)
        stats = bottom.analytic_stats(spec)
        eff = coeffs.theorem57_constants(stats, params)
        grid = SpectralGrid(16.0, 256)
        real = bottom.sample(spec, grid.length / params.eps, 2**10, seed=0)
        with pytest.raises(ValueError, match="amplitude guard"):
            coeffs.coefficient_fields(real, eff, params, grid)

    def test_spatial_mean_matches_ergodic_average(self):
        means, targets = [], []
        for s in range(8):
            cf, eff, params = self.make_fields(seed=s)
            means.append(cf.c_eps.mean())
        target = params.c0 * (1 - params.eps**2 * eff.a_kdv)
        se = np.std(means) / math.sqrt(len(means))
        assert abs(np.mean(means) - target) < 3 * se

    def test_positivity(self):
        cf, _, _ = self.make_fields()
        assert np.all(cf.h_eps > 0)
        assert np.all(cf.c_eps > 0)
