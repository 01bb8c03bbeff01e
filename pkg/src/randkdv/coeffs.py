"""Effective constants and coefficient fields of the long-wave models.

The wavespeed adjustment a_beta is the zero-lag value of D tanh(hD)
applied to the bottom covariance; the full quadratic correction to the
KdV wavespeed and the linear growth coefficient are

    a_kdv = a_beta/(2h) + E(beta^2)/(4h^2)
            + 3 c1 E((dbeta/dx)^2) / (8 h^2 sqrt(gh))
    b     = -7 c1 E((dbeta/dx)^3) / (64 h^3)

with c1 = h^3/3 * sqrt(g/(4h)) and c2 = (1/2) (g/(4h))^(1/4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, trapezoid

from .bottom import BottomRealization, ProcessStats
from .spectral import GridFunction, SpectralGrid, apply_multiplier, d_tanh_hd

# keeps h_eps = h - eps*beta - ... bounded away from zero
AMPLITUDE_GUARD = 0.25

THEOREM57_TOL = 1e-12


@dataclass(frozen=True)
class PhysicalParams:
    """Mean depth, gravity and the long-wave parameter."""

    h: float
    g: float
    eps: float

    def __post_init__(self):
        if self.h <= 0 or self.g <= 0:
            raise ValueError("depth and gravity must be positive")
        if not 0 < self.eps <= 0.25:
            raise ValueError("eps must lie in (0, 0.25]")

    @property
    def c0(self) -> float:
        """Linear long-wave speed sqrt(g h)."""
        return math.sqrt(self.g * self.h)


def c1_c2(params: PhysicalParams) -> tuple[float, float]:
    h, g = params.h, params.g
    c1 = h**3 / 3.0 * math.sqrt(g / (4 * h))
    c2 = 0.5 * (g / (4 * h)) ** 0.25
    return c1, c2


@dataclass(frozen=True)
class EffectiveCoefficients:
    c1: float
    c2: float
    a_beta: float
    a_kdv: float
    b: float
    sigma_beta: float
    stats: ProcessStats
    params: PhysicalParams

    def __post_init__(self):
        # the stored pair must be the pure arithmetic of the stored stats
        a, bb = _theorem57_formulas(self.stats, self.params, self.a_beta, self.c1)
        scale = max(abs(a), abs(bb), 1.0)
        if abs(a - self.a_kdv) > THEOREM57_TOL * scale or abs(bb - self.b) > (
            THEOREM57_TOL * scale
        ):
            raise ValueError("(a_kdv, b) inconsistent with the stored statistics")


def _theorem57_formulas(
    stats: ProcessStats, params: PhysicalParams, a_beta: float, c1: float
) -> tuple[float, float]:
    h = params.h
    a_kdv = (
        a_beta / (2 * h)
        + stats.m2 / (4 * h**2)
        + 3 * c1 * stats.d2 / (8 * h**2 * params.c0)
    )
    b = -7 * c1 * stats.d3 / (64 * h**3)
    return a_kdv, b


def a_beta_from_spectrum(spectrum, h: float) -> float:
    """(1/2pi) int k tanh(hk) rho_hat(k) dk by adaptive quadrature."""
    integrand = lambda k: k * math.tanh(h * k) * spectrum(k)
    # locate the spectrum's decay scale so the infinite tail can be cut
    k_max = 1.0
    peak = max(abs(spectrum(0.0)), abs(spectrum(k_max)))
    while integrand(k_max) > 1e-16 * max(peak, 1e-300) and k_max < 1e6:
        k_max *= 2.0
    # the tanh factor turns over at k ~ 1/h; give quad that breakpoint
    breakpoints = [b for b in (1.0 / h, 2.0 / h) if b < k_max]
    val, err = quad(integrand, 0.0, k_max, points=breakpoints, limit=400)
    if not np.isfinite(val) or err > 1e-8 * max(abs(val), 1.0) + 1e-12:
        raise ValueError("spectrum quadrature did not converge")
    return val / math.pi  # doubled even integrand over half line


def a_beta_from_cov(lags: np.ndarray, rho: np.ndarray, h: float) -> float:
    """a_beta from a sampled covariance: symmetrize, transform, integrate."""
    if len(lags) < 8 or lags[0] != 0.0:
        raise ValueError("need a lag grid starting at zero")
    dy = lags[1] - lags[0]
    # even extension on a periodic lag window twice the sampled range
    full = np.concatenate([rho, rho[-2:0:-1]])
    n = len(full)
    k = 2 * np.pi * np.fft.fftfreq(n, d=dy)
    rho_hat = np.fft.fft(full).real * dy
    vals = k * np.tanh(h * k) * rho_hat
    return float(np.sum(vals)) * (k[1] - k[0]) / (2 * np.pi)


def a_beta_from_realization(real: BottomRealization, h: float) -> tuple[float, float]:
    """Spatial-average route: mean of beta * (D tanh(hD) beta) over the period.

    Returns (estimate, standard error from block means).
    """
    grid = SpectralGrid(real.length, real.n)
    f = GridFunction(grid, real.values)
    tf = apply_multiplier(f, d_tanh_hd(h))
    prod = real.values * tf.values
    est = float(prod.mean())
    nblocks = 32
    block = real.n // nblocks
    means = prod[: nblocks * block].reshape(nblocks, block).mean(axis=1)
    se = float(means.std(ddof=1) / math.sqrt(nblocks))
    return est, se


def theorem57_constants(stats: ProcessStats, params: PhysicalParams, a_beta=None):
    """Evaluate the consistency-analysis constants from process statistics."""
    c1, c2 = c1_c2(params)
    if a_beta is None:
        a_beta = a_beta_from_cov(stats.lags, stats.rho, params.h)
    a_kdv, b = _theorem57_formulas(stats, params, a_beta, c1)
    return EffectiveCoefficients(
        c1=c1,
        c2=c2,
        a_beta=a_beta,
        a_kdv=a_kdv,
        b=b,
        sigma_beta=stats.sigma_beta,
        stats=stats,
        params=params,
    )


@dataclass
class CoefficientFields:
    """h_eps, c_eps and the Boussinesq effective depth on a coarse grid.

    Off-node values come from the realization's trigonometric/kernel
    interpolant, so the fields can also be queried along characteristics.
    """

    grid: SpectralGrid
    realization: BottomRealization
    coeffs: EffectiveCoefficients
    params: PhysicalParams
    h_eps: np.ndarray
    c_eps: np.ndarray
    h0: np.ndarray

    def beta_at(self, x_coarse) -> np.ndarray:
        return self.realization.eval(np.asarray(x_coarse) / self.params.eps)

    def dbeta_at(self, x_coarse) -> np.ndarray:
        """Fine-scale slope (d/dx beta)(X/eps)."""
        return self.realization.deriv_at(np.asarray(x_coarse) / self.params.eps)

    def c_eps_at(self, x_coarse) -> np.ndarray:
        p, c = self.params, self.coeffs
        return p.c0 * (
            1.0
            - p.eps / (2 * p.h) * self.beta_at(x_coarse)
            - p.eps**2 * c.a_kdv
        )

    def dc_eps_at(self, x_coarse) -> np.ndarray:
        """dc_eps/dX; the chain rule cancels one power of eps."""
        p = self.params
        return -p.c0 / (2 * p.h) * self.dbeta_at(x_coarse)

    def h_eps_at(self, x_coarse) -> np.ndarray:
        p, c = self.params, self.coeffs
        return p.h - p.eps * self.beta_at(x_coarse) - p.eps**2 * c.a_beta


def coefficient_fields(
    real: BottomRealization,
    coeffs: EffectiveCoefficients,
    params: PhysicalParams,
    grid: SpectralGrid,
) -> CoefficientFields:
    if real.spec.sigma * params.eps >= AMPLITUDE_GUARD * params.h:
        raise ValueError(
            "amplitude guard violated: sigma * eps must stay below h/4"
        )
    if grid.length / params.eps > real.length * (1 + 1e-9):
        raise ValueError("fine realization does not cover coarse domain / eps")
    if real.spacing > real.spec.ell / 8:
        raise ValueError("fine grid does not resolve the correlation length")
    fields = CoefficientFields(
        grid=grid,
        realization=real,
        coeffs=coeffs,
        params=params,
        h_eps=np.empty(grid.n),
        c_eps=np.empty(grid.n),
        h0=np.empty(grid.n),
    )
    fields.h_eps = fields.h_eps_at(grid.nodes)
    fields.c_eps = fields.c_eps_at(grid.nodes)
    fields.h0 = fields.h_eps.copy()
    if np.any(fields.h_eps <= 0) or np.any(fields.c_eps <= 0):
        raise ValueError("effective depth or wavespeed crossed zero")
    return fields
