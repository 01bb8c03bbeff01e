import math

import numpy as np
import pytest

from randkdv import bottom, charflow, coeffs, waves
from randkdv.scalesep import BumpFunction
from randkdv.spectral import GridFunction, SpectralGrid

PARAMS = coeffs.PhysicalParams(h=1.0, g=1.0, eps=0.05)
ZERO_SPEC = bottom.GaussianSpectralSpec(sigma=0.0, ell=1.0)
GAUSS = bottom.GaussianSpectralSpec(sigma=0.5, ell=1.0)


def flat_coeffs(params=PARAMS):
    return coeffs.theorem57_constants(
        bottom.analytic_stats(ZERO_SPEC), params, a_beta=0.0
    )


def skewed_coeffs(params=PARAMS):
    spec = bottom.SkewedMASpec(sigma=0.5, ell=1.0, delta=0.5, tilt=0.5)
    return coeffs.theorem57_constants(bottom.analytic_stats(spec), params)


def setup_random(eps=0.05, seed=11, L=16.0, n_coarse=512, spec=GAUSS):
    params = coeffs.PhysicalParams(h=1.0, g=1.0, eps=eps)
    eff = coeffs.theorem57_constants(bottom.analytic_stats(spec), params)
    n_fine = int(2 ** math.ceil(math.log2(L / eps * 8)))
    real = bottom.sample(spec, L / eps, n_fine, seed)
    grid = SpectralGrid(L, n_coarse)
    fields = coeffs.coefficient_fields(real, eff, params, grid)
    return params, eff, real, grid, fields


class TestKdV:
    def test_soliton_one_transit(self):
        eff = flat_coeffs()
        grid = SpectralGrid(40.0, 512)
        q0 = waves.soliton(grid, eff, speed=1.0, center=10.0)
        hist = waves.solve_kdv(q0, eff, tau_end=40.0, dtau=0.005, store_times=[40.0])
        err = np.max(np.abs(hist.q[-1] - q0.values)) / np.max(np.abs(q0.values))
        assert err < 1e-4

    def test_soliton_residual_is_exact_solution(self):
        # the sech^2 ansatz satisfies the PDE: residual through independent
        # finite differences in Y and the exact speed relation
        eff = flat_coeffs()
        grid = SpectralGrid(40.0, 1024)
        v = 1.0
        amp = v / eff.c2
        kappa = math.sqrt(v / (4 * eff.c1))
        y = grid.nodes
        q = amp / np.cosh(kappa * (y - 20.0)) ** 2
        dy = grid.spacing
        q_y = (np.roll(q, -1) - np.roll(q, 1)) / (2 * dy)
        q_yyy = (
            np.roll(q, -2) / 2 - np.roll(q, -1) + np.roll(q, 1) - np.roll(q, 2) / 2
        ) / dy**3
        # traveling wave: dq/dtau = -v q_Y, so residual of the PDE is
        resid = -v * q_y + eff.c1 * q_yyy + 3 * eff.c2 * q * q_y
        assert np.max(np.abs(resid)) < 1e-4 * np.max(np.abs(q))

    def test_linear_mode_solution(self):
        eff = skewed_coeffs()
        grid = SpectralGrid(30.0, 256)
        k = 2 * np.pi * 3 / 30.0
        amp = 1e-9  # nonlinearity negligible at this amplitude
        q0 = GridFunction(grid, amp * np.cos(k * grid.nodes))
        hist = waves.solve_kdv(q0, eff, tau_end=2.0, dtau=0.002, store_times=[2.0])
        expect = (
            amp
            * math.exp(eff.b * 2.0)
            * np.cos(k * grid.nodes + eff.c1 * k**3 * 2.0)
        )
        assert np.max(np.abs(hist.q[-1] - expect)) < 1e-8 * amp

    def test_constant_state_pure_growth(self):
        eff = skewed_coeffs()
        grid = SpectralGrid(30.0, 256)
        q0 = GridFunction(grid, np.full(grid.n, 0.3))
        hist = waves.solve_kdv(q0, eff, tau_end=3.0, dtau=0.01, store_times=[3.0])
        assert np.max(np.abs(hist.q[-1] - 0.3 * math.exp(eff.b * 3.0))) < 1e-12

    @pytest.mark.parametrize("which", ["flat", "skewed"])
    def test_mass_and_energy_laws(self, which):
        eff = flat_coeffs() if which == "flat" else skewed_coeffs()
        grid = SpectralGrid(30.0, 256)
        q0 = GridFunction(grid, np.exp(-(((grid.nodes - 10) / 2) ** 2)))
        tau_end = 5.0
        hist = waves.solve_kdv(q0, eff, tau_end=tau_end, dtau=0.005, store_times=[tau_end])
        m0, m1 = waves.kdv_mass(hist, 0), waves.kdv_mass(hist, -1)
        e0, e1 = waves.kdv_energy(hist, 0), waves.kdv_energy(hist, -1)
        assert abs(m1 - m0 * math.exp(eff.b * tau_end)) < 1e-8 * abs(m0) * tau_end
        assert abs(e1 - e0 * math.exp(2 * eff.b * tau_end)) < 1e-6 * abs(e0) * tau_end

    def test_blowup_detector(self):
        # unstable configuration: b > 0 run far beyond the growth bound is
        # not reachable quickly, so drive blow-up through a huge amplitude
        eff = flat_coeffs()
        grid = SpectralGrid(30.0, 256)
        q0 = GridFunction(grid, 40.0 * np.exp(-(((grid.nodes - 10) / 1) ** 2)))
        with pytest.raises((RuntimeError, ValueError)):
            waves.solve_kdv(q0, eff, tau_end=60.0, dtau=0.004, store_times=[60.0])

    def test_cfl_guard(self):
        eff = flat_coeffs()
        grid = SpectralGrid(30.0, 1024)
        q0 = GridFunction(grid, 5 * np.exp(-(((grid.nodes - 10) / 2) ** 2)))
        with pytest.raises(ValueError, match="CFL"):
            waves.solve_kdv(q0, eff, tau_end=1.0, dtau=0.2, store_times=[1.0])

    def test_potential_antiderivative(self):
        grid = SpectralGrid(30.0, 256)
        q0 = GridFunction(grid, np.sin(2 * np.pi * 3 * grid.nodes / 30.0))
        Q = waves.potential(q0)
        from randkdv.spectral import derivative

        back = derivative(Q, 1)
        assert np.max(np.abs(back.values - q0.values)) < 1e-10


class TestReconstruction:
    def test_time_zero_identity(self):
        params, eff, real, grid, fields = setup_random()
        q0 = GridFunction(grid, BumpFunction(4.0, 1.5)(grid.nodes))
        kdv = waves.solve_kdv(q0, eff, tau_end=1e-4, dtau=1e-5, store_times=[1e-4])
        tof = charflow.TimeOfFlightMap(fields)
        r = waves.reconstruct_r(kdv, tof, params, [0.0], grid.nodes)
        assert np.max(np.abs(r[0] - kdv.q[0])) < 1e-13

    def test_flat_bottom_transport_composition(self):
        params, eff, real, grid, fields = setup_random(spec=ZERO_SPEC)
        q0 = GridFunction(grid, BumpFunction(4.0, 1.5)(grid.nodes))
        t = 2.0
        tau = params.eps**2 * t
        kdv = waves.solve_kdv(q0, eff, tau_end=tau, dtau=tau / 20, store_times=[tau])
        tof = charflow.TimeOfFlightMap(fields)
        r = waves.reconstruct_r(kdv, tof, params, [t], grid.nodes)[0]
        speed = params.c0 * (1 - params.eps**2 * eff.a_kdv)
        expect = kdv.eval_q(grid.nodes - speed * t, tau)
        assert np.max(np.abs(r - expect)) < 1e-9

    def test_leading_term_order(self):
        # L2 distance from q(X - c0 t, tau) decays at least like eps
        t = 2.0
        diffs = []
        eps_list = [0.08, 0.04, 0.02, 0.01]
        for eps in eps_list:
            acc = []
            for m in range(4):
                params, eff, real, grid, fields = setup_random(eps=eps, seed=100 + m)
                q0 = GridFunction(grid, BumpFunction(4.0, 1.5)(grid.nodes))
                tau = eps**2 * t
                kdv = waves.solve_kdv(
                    q0, eff, tau_end=tau, dtau=tau / 20, store_times=[tau]
                )
                tof = charflow.TimeOfFlightMap(fields)
                r = waves.reconstruct_r(kdv, tof, params, [t], grid.nodes)[0]
                lead = kdv.eval_q(grid.nodes - params.c0 * t, tau)
                acc.append(math.sqrt(np.mean((r - lead) ** 2) * grid.length))
            diffs.append(np.mean(acc))
        slope = np.polyfit(np.log(eps_list), np.log(diffs), 1)[0]
        assert slope >= 0.9

    def test_asymptotic_r_paired_order(self):
        t = 2.0
        phi = BumpFunction(9.0, 2.5)
        eps_list = [0.08, 0.04, 0.02, 0.01]
        diffs = []
        for eps in eps_list:
            acc = []
            for m in range(4):
                params, eff, real, grid, fields = setup_random(eps=eps, seed=100 + m)
                q0 = GridFunction(grid, BumpFunction(4.0, 1.5)(grid.nodes))
                tau = eps**2 * t
                kdv = waves.solve_kdv(
                    q0, eff, tau_end=tau, dtau=tau / 20, store_times=[tau]
                )
                tof = charflow.TimeOfFlightMap(fields)
                r = waves.reconstruct_r(kdv, tof, params, [t], grid.nodes)[0]
                ra = waves.asymptotic_r(kdv, real, params, t, grid)
                acc.append(abs(np.sum(phi(grid.nodes) * (r - ra))) * grid.spacing)
            diffs.append(np.mean(acc))
        slope = np.polyfit(np.log(eps_list), np.log(diffs), 1)[0]
        assert slope > 1.5

    def test_asymptotic_r_degenerate_sigma_transport_only(self):
        dd = bottom.DerivedDerivativeSpec(inner=GAUSS)
        params, eff, real, grid, fields = setup_random(spec=dd)
        q0 = GridFunction(grid, BumpFunction(4.0, 1.5)(grid.nodes))
        t = 1.0
        tau = params.eps**2 * t
        kdv = waves.solve_kdv(q0, eff, tau_end=tau, dtau=tau / 10, store_times=[tau])
        ra = waves.asymptotic_r(kdv, real, params, t, grid)
        lead = kdv.eval_q(grid.nodes - params.c0 * t, tau)
        assert np.array_equal(ra, lead)


class TestScattered:
    def test_flat_bottom_pure_left_transport(self):
        params, eff, real, grid, fields = setup_random(spec=ZERO_SPEC)
        q0 = GridFunction(grid, BumpFunction(4.0, 1.5)(grid.nodes))
        s10 = BumpFunction(12.0, 1.5)
        tau = params.eps**2 * 2.0
        kdv = waves.solve_kdv(q0, eff, tau_end=tau, dtau=tau / 20, store_times=[tau])
        tof = charflow.TimeOfFlightMap(fields)
        s1 = waves.scattered_s1(kdv, tof, real, params, s10, [0.0, 2.0], grid.nodes)
        assert np.array_equal(s1[0], s10(grid.nodes))
        assert np.max(np.abs(s1[1] - s10(grid.nodes + params.c0 * 2.0))) == 0.0

    def test_matches_asymptotic_formula_paired(self):
        t = 2.0
        s10 = BumpFunction(12.0, 1.5)
        phi = BumpFunction(8.0, 3.0)
        eps_list = [0.08, 0.04, 0.02, 0.01]
        diffs = []
        for eps in eps_list:
            acc = []
            for m in range(4):
                params, eff, real, grid, fields = setup_random(eps=eps, seed=300 + m)
                q0 = GridFunction(grid, BumpFunction(4.0, 1.5)(grid.nodes))
                tau = eps**2 * t
                kdv = waves.solve_kdv(
                    q0,
                    eff,
                    tau_end=tau,
                    dtau=tau / 20,
                    store_times=np.linspace(0, tau, 9),
                )
                tof = charflow.TimeOfFlightMap(fields)
                s1 = waves.scattered_s1(
                    kdv, tof, real, params, s10, [t], grid.nodes, points_per_ell=16
                )[0]
                s1a = waves.asymptotic_s1(kdv, real, params, s10, t, grid.nodes)
                acc.append(abs(np.sum(phi(grid.nodes) * (s1 - s1a))) * grid.spacing)
            diffs.append(np.mean(acc))
        slope = np.polyfit(np.log(eps_list), np.log(diffs), 1)[0]
        assert slope >= 0.4

    def test_asymptotic_s1_time_zero(self):
        params, eff, real, grid, fields = setup_random()
        q0 = GridFunction(grid, BumpFunction(4.0, 1.5)(grid.nodes))
        s10 = BumpFunction(12.0, 1.5)
        kdv = waves.solve_kdv(q0, eff, tau_end=1e-4, dtau=1e-5, store_times=[1e-4])
        s1a = waves.asymptotic_s1(kdv, real, params, s10, 0.0, grid.nodes)
        # at t = 0 the fan is empty and boundary terms cancel pairwise
        assert np.max(np.abs(s1a - s10(grid.nodes))) < 1e-10


class TestBoussinesq:
    def make_flat(self, eps=0.1, L=20.0, n=256):
        params = coeffs.PhysicalParams(h=1.0, g=1.0, eps=eps)
        eff = flat_coeffs(params)
        real = bottom.sample(ZERO_SPEC, L / eps, 2048, seed=0)
        grid = SpectralGrid(L, n)
        fields = coeffs.coefficient_fields(real, eff, params, grid)
        return params, grid, fields

    def test_linear_dispersion(self):
        params, grid, fields = self.make_flat()
        k = 2 * np.pi * 10 / grid.length
        om = waves.boussinesq_dispersion(params, float(fields.h0.mean()), k)
        amp = 0.01
        eta0 = GridFunction(grid, amp * np.cos(k * grid.nodes))
        u0 = GridFunction(grid, (params.g * k * amp / om) * np.cos(k * grid.nodes))
        T = 3 * 2 * np.pi / om
        hist = waves.solve_boussinesq_filtered(
            eta0, u0, fields, params, T, dt=0.002, k_cut=6.0, linearized=True
        )
        assert np.max(np.abs(hist.eta[-1] - eta0.values)) / amp < 1e-6

    def test_zero_data_stays_zero(self):
        params, grid, fields = self.make_flat()
        z = GridFunction(grid, np.zeros(grid.n))
        hist = waves.solve_boussinesq_filtered(z, z, fields, params, 1.0, 0.01, 6.0)
        assert np.max(np.abs(hist.eta)) == 0.0
        assert np.max(np.abs(hist.u)) == 0.0

    def test_mass_conservation_nonlinear(self):
        params, grid, fields = self.make_flat()
        eta0 = GridFunction(grid, 0.1 * np.exp(-(((grid.nodes - 10) / 2) ** 2)))
        u0 = GridFunction(grid, np.zeros(grid.n))
        hist = waves.solve_boussinesq_filtered(
            eta0, u0, fields, params, 4.0, dt=0.002, k_cut=6.0
        )
        m = hist.eta.mean(axis=1) * grid.length
        assert np.max(np.abs(m - m[0])) < 1e-10

    def test_cutoff_guard(self):
        params, grid, fields = self.make_flat()
        z = GridFunction(grid, np.zeros(grid.n))
        with pytest.raises(ValueError, match="cutoff"):
            waves.solve_boussinesq_filtered(z, z, fields, params, 0.1, 0.001, k_cut=9.0)

    def test_filtered_modes_identically_zero(self):
        params, grid, fields = self.make_flat()
        rng = np.random.default_rng(3)
        eta0 = GridFunction(grid, 0.01 * rng.standard_normal(grid.n))
        u0 = GridFunction(grid, np.zeros(grid.n))
        hist = waves.solve_boussinesq_filtered(
            eta0, u0, fields, params, 0.5, dt=0.002, k_cut=4.0
        )
        ehat = np.fft.fft(hist.eta[-1])
        assert np.max(np.abs(ehat[np.abs(grid.wavenumbers) > 4.0])) < 1e-12

    def test_random_bottom_runs(self):
        params = coeffs.PhysicalParams(h=1.0, g=1.0, eps=0.1)
        eff = coeffs.theorem57_constants(bottom.analytic_stats(GAUSS), params)
        grid = SpectralGrid(20.0, 256)
        real = bottom.sample(GAUSS, 200.0, 2048, seed=4)
        fields = coeffs.coefficient_fields(real, eff, params, grid)
        eta0 = GridFunction(grid, 0.1 * np.exp(-(((grid.nodes - 10) / 2) ** 2)))
        u0 = GridFunction(grid, np.zeros(grid.n))
        hist = waves.solve_boussinesq_filtered(
            eta0, u0, fields, params, 2.0, dt=0.002, k_cut=6.0
        )
        assert np.all(np.isfinite(hist.eta))


class TestScaledHamiltonian:
    def test_flat_bottom_reduces_to_leading_terms(self):
        params, grid, fields = TestBoussinesq().make_flat()
        real = fields.realization
        xi = GridFunction(grid, np.sin(2 * np.pi * 2 * grid.nodes / grid.length))
        eta = GridFunction(grid, 0.5 * np.cos(2 * np.pi * 3 * grid.nodes / grid.length))
        H = waves.scaled_hamiltonian(eta, xi, real, params)
        from randkdv.spectral import derivative

        dxi = derivative(xi, 1).values
        d4 = derivative(xi, 4).values
        dens = (
            params.h * dxi**2
            + params.g * eta.values**2
            + params.eps**2
            / 2
            * (eta.values * dxi**2 - params.h**3 / 3 * xi.values * d4)
        )
        expect = params.eps**3 / 2 * dens.mean() * grid.length
        assert H == pytest.approx(expect, rel=1e-12)

    def test_beta_terms_lower_energy_over_bumps(self):
        # the O(eps) bottom term enters with the realization sign structure
        params, eff, real, grid, fields = setup_random(seed=3)
        xi = GridFunction(grid, np.sin(2 * np.pi * 2 * grid.nodes / grid.length))
        eta = GridFunction(grid, np.zeros(grid.n))
        H = waves.scaled_hamiltonian(eta, xi, real, params)
        assert np.isfinite(H) and H > 0
