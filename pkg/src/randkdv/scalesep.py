"""Monte Carlo verification of the scale-separation estimates.

A term is declared of order eps^r when the log-log regression of its
statistic (ensemble mean magnitude or spread) against eps has slope r
within tolerance.  Convergence in law is operationalized as one-sample
Kolmogorov-Smirnov tests on finite-dimensional marginals together with
increment-correlation checks; no functional test is attempted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import ndtr

from . import bottom
from .bottom import BottomRealization, DegenerateSigmaError

# |slope - target| <= max(SLOPE_TOL, 2 se) passes an order regression
SLOPE_TOL = 0.15

KS_COEFF_5PCT = 1.36


# ---------------------------------------------------------------------------
# polynomial bump test functions (compact support, C^3)


@dataclass(frozen=True)
class BumpFunction:
    """(1 - u^2)^p bump centered at `center` with half-width `width`."""

    center: float = 0.0
    width: float = 1.0
    p: int = 4

    def _u(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.width

    def __call__(self, x):
        u = self._u(x)
        inside = np.abs(u) < 1.0
        u = np.where(inside, u, 0.0)
        return np.where(inside, (1 - u**2) ** self.p, 0.0)

    def d1(self, x):
        u = self._u(x)
        inside = np.abs(u) < 1.0
        u = np.where(inside, u, 0.0)
        val = -2 * self.p * u * (1 - u**2) ** (self.p - 1) / self.width
        return np.where(inside, val, 0.0)

    def d2(self, x):
        u = self._u(x)
        inside = np.abs(u) < 1.0
        u = np.where(inside, u, 0.0)
        p = self.p
        val = (
            -2 * p * (1 - u**2) ** (p - 1)
            + 4 * p * (p - 1) * u**2 * (1 - u**2) ** (p - 2)
        ) / self.width**2
        return np.where(inside, val, 0.0)


@dataclass(frozen=True)
class TestFunction:
    """Separable space-time bump phi(X, t) = bx(X) * bt(t)."""

    bx: BumpFunction
    bt: BumpFunction

    def __call__(self, X, t):
        return self.bx(X) * self.bt(t)

    def dX(self, X, t):
        return self.bx.d1(X) * self.bt(t)

    def dt(self, X, t):
        return self.bx(X) * self.bt.d1(t)


@dataclass(frozen=True)
class TestFunction3:
    """Separable phi(theta, X, t) used for the characteristic integrals."""

    btheta: BumpFunction
    bx: BumpFunction
    bt: BumpFunction

    def __call__(self, theta, X, t):
        return self.btheta(theta) * self.bx(X) * self.bt(t)


def space_time_bump(x0, wx, t0, wt, p: int = 4) -> TestFunction:
    return TestFunction(BumpFunction(x0, wx, p), BumpFunction(t0, wt, p))


# ---------------------------------------------------------------------------
# order regression


@dataclass
class OrderEstimate:
    """Log-log regression of a statistic against eps."""

    eps: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    statistic: np.ndarray
    slope: float
    slope_se: float
    target: Optional[float] = None
    label: str = ""

    @property
    def passed(self) -> bool:
        if self.target is None:
            return True
        return abs(self.slope - self.target) <= max(SLOPE_TOL, 2 * self.slope_se)


def loglog_slope(eps: Sequence[float], stat: Sequence[float]) -> tuple[float, float]:
    """OLS slope and its standard error on log-log axes."""
    stat = np.asarray(stat, dtype=float)
    if np.any(stat <= 0):
        return float("nan"), float("nan")
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(stat)
    n = len(x)
    A = np.vstack([x, np.ones(n)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    if n > 2:
        resid = y - A @ coef
        s2 = float(resid @ resid) / (n - 2)
        sxx = float(np.sum((x - x.mean()) ** 2))
        se = math.sqrt(s2 / sxx)
    else:
        se = float("nan")
    return slope, se


def order_estimate(
    eps_list, per_eps_samples, statistic: str = "sd", target=None, label=""
) -> OrderEstimate:
    """Build an OrderEstimate from per-eps Monte Carlo samples.

    statistic: "sd" regresses the ensemble spread, "mean_abs" the mean
    magnitude.  At least 4 eps values spanning a factor 8 are required.
    """
    eps = np.asarray(list(eps_list), dtype=float)
    if len(eps) < 4 or max(eps) / min(eps) < 8 * (1 - 1e-9):
        raise ValueError("need >= 4 eps values spanning a factor >= 8")
    means = np.array([np.mean(s) for s in per_eps_samples])
    sds = np.array([np.std(s, ddof=1) for s in per_eps_samples])
    if statistic == "sd":
        stat = sds
    elif statistic == "mean_abs":
        stat = np.array([np.mean(np.abs(s)) for s in per_eps_samples])
    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    slope, se = loglog_slope(eps, stat)
    return OrderEstimate(
        eps=eps,
        means=means,
        sds=sds,
        statistic=stat,
        slope=slope,
        slope_se=se,
        target=target,
        label=label,
    )


# ---------------------------------------------------------------------------
# path functional and multiscale integrals


@dataclass
class PathFunctional:
    """Rescaled integral Y_eps(X) = (sqrt(eps)/sigma) int_0^{X/eps} beta."""

    realization: BottomRealization
    eps: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise DegenerateSigmaError(
                "sigma_beta = 0: the Brownian normalization is undefined "
                "(derivative-process regime, see the sigma-trend estimator)"
            )

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        vals = self.realization.integral_to(X / self.eps)
        return math.sqrt(self.eps) / self.sigma * vals

    def unnormalized(self, X):
        """sqrt(eps) int_0^{X/eps} beta, the vector-Donsker convention."""
        X = np.asarray(X, dtype=float)
        return math.sqrt(self.eps) * self.realization.integral_to(X / self.eps)


def z_integral(real: BottomRealization, f, eps: float, support=None) -> float:
    """int beta(X/eps) f(X) dX by trapezoid on the fine grid.

    The coarse quadrature spacing is eps*dx_fine and must resolve the
    fine oscillation: eps*dx <= eps*ell/4, i.e. dx <= ell/4.
    """
    if real.spacing > real.spec.ell / 4:
        raise ValueError("fine grid too coarse for the multiscale quadrature")
    x = real.nodes
    fx = f(eps * x)
    return eps * trapezoid(real.values * fx, dx=real.spacing)


def _sub_seed(seed: int, index: int) -> int:
    from .ensemble import mix_seed

    return mix_seed(seed, index)


def _fine_grid_for(spec, eps: float, coarse_span: float, points_per_ell: int = 8):
    length = coarse_span / eps
    length = max(length, bottom.MIN_PERIOD_TO_ELL * spec.ell)
    if getattr(spec, "kind", "") in ("skewed-ma",):
        delta = spec.delta
        length = math.ceil(length / delta) * delta
    inner = getattr(spec, "inner", None)
    if inner is not None and inner.kind == "skewed-ma":
        delta = inner.delta
        length = math.ceil(length / delta) * delta
    n = int(2 ** math.ceil(math.log2(max(length / spec.ell * points_per_ell, 256))))
    return length, n


def verify_lln(
    spec,
    f,
    eps_list,
    n_realizations: int,
    seed: int,
    decay_target: float = 0.5,
) -> OrderEstimate:
    """Lemma 3.2/3.3: mean of Z_eps -> E(beta) int f, spread ~ eps^target."""
    span = _bump_span(f)
    samples = []
    for j, eps in enumerate(eps_list):
        length, n = _fine_grid_for(spec, eps, span)
        vals = np.empty(n_realizations)
        for m in range(n_realizations):
            real = bottom.sample(spec, length, n, _sub_seed(seed, j * 100003 + m))
            vals[m] = z_integral(real, f, eps)
        samples.append(vals)
    return order_estimate(
        eps_list, samples, statistic="sd", target=decay_target, label="z-integral"
    )


def _bump_span(f) -> float:
    """Right edge of the support; bumps must live inside [0, span)."""
    if isinstance(f, BumpFunction):
        if f.center - f.width < 0:
            raise ValueError(
                "test-function support must lie inside the coarse window [0, L)"
            )
        return f.center + f.width + 1.0
    return 8.0


@dataclass
class DonskerReport:
    n_realizations: int
    x_bar: float
    ks_statistic: float
    ks_critical: float
    endpoint_variance: float
    increment_correlation: float
    correlation_bound: float

    @property
    def passed(self) -> bool:
        return (
            self.ks_statistic < self.ks_critical
            and abs(self.endpoint_variance - self.x_bar) < 0.05 * self.x_bar
            and abs(self.increment_correlation) < self.correlation_bound
        )


def verify_donsker(
    spec, eps: float, n_realizations: int, seed: int, x_bar: float = 1.0
) -> DonskerReport:
    """Lemma 3.3: Y_eps(x_bar) is asymptotically Normal(0, x_bar) with
    independent increments."""
    sigma = spec.sigma_beta()
    if sigma <= 1e-12:
        raise DegenerateSigmaError(
            "sigma_beta = 0: Donsker scaling degenerates (Lemma 3.1 regime)"
        )
    length, n = _fine_grid_for(spec, eps, 2.2 * x_bar)
    endpoints = np.empty(n_realizations)
    first_half = np.empty(n_realizations)
    second_half = np.empty(n_realizations)
    for m in range(n_realizations):
        real = bottom.sample(spec, length, n, _sub_seed(seed, m))
        y = PathFunctional(real, eps, sigma)
        y0, yh, y1, y2 = y(np.array([0.0, x_bar / 2, x_bar, 2 * x_bar]))
        endpoints[m] = y1
        first_half[m] = yh - y0
        second_half[m] = y2 - y1

    z = np.sort(endpoints) / math.sqrt(x_bar)
    cdf = ndtr(z)
    i = np.arange(1, n_realizations + 1)
    ks = float(
        np.max(np.maximum(i / n_realizations - cdf, cdf - (i - 1) / n_realizations))
    )
    corr = float(np.corrcoef(first_half, second_half)[0, 1])
    return DonskerReport(
        n_realizations=n_realizations,
        x_bar=x_bar,
        ks_statistic=ks,
        ks_critical=KS_COEFF_5PCT / math.sqrt(n_realizations),
        endpoint_variance=float(endpoints.var(ddof=1)),
        increment_correlation=corr,
        correlation_bound=3.0 / math.sqrt(n_realizations),
    )


def covariance_identity_gap(
    spec, f, g, eps: float, n_realizations: int, seed: int
) -> tuple[float, float, float]:
    """Lemma 3.4: E(Z_eps(f) Z_eps(g)) / eps -> sigma_beta^2 int f g.

    Returns (empirical, target, standard error of the empirical value).
    """
    span = max(_bump_span(f), _bump_span(g))
    length, n = _fine_grid_for(spec, eps, span)
    prods = np.empty(n_realizations)
    for m in range(n_realizations):
        real = bottom.sample(spec, length, n, _sub_seed(seed, m))
        prods[m] = z_integral(real, f, eps) * z_integral(real, g, eps) / eps
    x = np.linspace(-span, span, 4001)
    target = spec.sigma_beta() ** 2 * trapezoid(f(x) * g(x), x)
    return float(prods.mean()), float(target), float(
        prods.std(ddof=1) / math.sqrt(n_realizations)
    )


# ---------------------------------------------------------------------------
# process pairs


@dataclass(frozen=True)
class ProcessPair:
    """Vector process (beta1, beta2): independent, identical or shifted."""

    spec1: object
    spec2: object
    relation: str = "independent"  # "independent" | "identical" | "shifted"
    shift: float = 0.0

    def sample_pair(self, length, n, seed):
        r1 = bottom.sample(self.spec1, length, n, seed)
        if self.relation == "independent":
            r2 = bottom.sample(self.spec2, length, n, _sub_seed(seed, 0x5EED))
        elif self.relation == "identical":
            r2 = r1
        elif self.relation == "shifted":
            dx = length / n
            k = int(round(self.shift / dx))
            r2 = bottom.BottomRealization(
                spec=self.spec1,
                length=length,
                n=n,
                seed=seed,
                values=np.roll(r1.values, -k),
                deriv_values=np.roll(r1.deriv_values, -k),
            )
        else:
            raise ValueError(f"unknown pair relation {self.relation!r}")
        return r1, r2

    def covariance_matrix(self) -> np.ndarray:
        """C(gamma): sigma_j^2 on the diagonal, rho_12 = int E(b1(0) b2(y)) dy."""
        s1 = self.spec1.sigma_beta()
        s2 = self.spec2.sigma_beta() if self.relation == "independent" else s1
        if self.relation == "independent":
            rho12 = 0.0
        else:
            # int rho(y + shift) dy over the line equals sigma^2 for any shift
            y = np.linspace(-40 * self.spec1.ell, 40 * self.spec1.ell, 8001)
            rho12 = float(
                trapezoid(self.spec1.covariance_deriv(y + self.shift, 0), y)
            )
        return np.array([[s1**2, rho12], [rho12, s2**2]])


def verify_product_order(
    pair: ProcessPair,
    c: float,
    phi: TestFunction,
    eps_list,
    n_realizations: int,
    seed: int,
    target: float = 1.0,
    quad_points_per_ell: float = 4.0,
) -> OrderEstimate:
    """Lemma 3.6: int beta1(X/eps) beta2((X+ct)/eps) phi dX dt = O(eps^target)."""
    if c == 0:
        raise ValueError("the product lemma needs a nonzero relative speed c")
    bx, bt = phi.bx, phi.bt
    samples = []
    for j, eps in enumerate(eps_list):
        span = abs(bx.center) + bx.width + abs(c) * (abs(bt.center) + bt.width) + 1
        length, n = _fine_grid_for(pair.spec1, eps, 2 * span)
        dq = eps * pair.spec1.ell / quad_points_per_ell
        X = np.arange(bx.center - bx.width, bx.center + bx.width + dq, dq)
        t = np.arange(bt.center - bt.width, bt.center + bt.width + dq / abs(c), dq / abs(c))
        pts = (X[None, :] + c * t[:, None]) / eps
        weights = bx(X)[None, :] * bt(t)[:, None]
        vals = np.empty(n_realizations)
        for m in range(n_realizations):
            r1, r2 = pair.sample_pair(length, n, _sub_seed(seed, j * 99991 + m))
            b1 = r1.eval_linear(X / eps)
            b2 = r2.eval_linear(pts.ravel()).reshape(pts.shape)
            inner = trapezoid(b1[None, :] * b2 * weights, dx=dq, axis=1)
            vals[m] = trapezoid(inner, dx=dq / abs(c))
        samples.append(vals)
    return order_estimate(
        eps_list, samples, statistic="sd", target=target, label="product-order"
    )


def verify_characteristic_integral(
    pair: ProcessPair,
    phi: TestFunction3,
    eps_list,
    n_realizations: int,
    seed: int,
    sqrt_gh: float = 1.0,
) -> OrderEstimate:
    """Lemma 3.8: the symmetrized double characteristic integral is O(eps).

    With a separable test function the inner theta-integral reduces to a
    difference of cumulative antiderivatives, evaluated per (X, t) node.
    """
    bth, bx, bt = phi.btheta, phi.bx, phi.bt
    samples = []
    for j, eps in enumerate(eps_list):
        span = (
            max(abs(bth.center) + bth.width, abs(bx.center) + bx.width)
            + sqrt_gh * (abs(bt.center) + bt.width)
            + 1
        )
        length, n = _fine_grid_for(pair.spec1, eps, 2 * span)
        dq = eps * pair.spec1.ell / 4
        X = np.arange(bx.center - bx.width, bx.center + bx.width + dq, dq)
        t = np.arange(max(bt.center - bt.width, 0.0), bt.center + bt.width + dq, dq / sqrt_gh)
        theta_grid = np.arange(X[0], X[-1] + sqrt_gh * t[-1] + 2 * dq, dq)
        uppers = X[None, :] + sqrt_gh * t[:, None]
        weights = bx(X)[None, :] * bt(t)[:, None]
        vals = np.empty(n_realizations)
        for m in range(n_realizations):
            r1, r2 = pair.sample_pair(length, n, _sub_seed(seed, j * 99991 + m))
            b1_X = r1.eval_linear(X / eps)
            b2_X = r2.eval_linear(X / eps)
            w1 = r1.eval_linear(theta_grid / eps) * bth(theta_grid)
            w2 = r2.eval_linear(theta_grid / eps) * bth(theta_grid)
            G1 = np.concatenate([[0.0], np.cumsum((w1[1:] + w1[:-1]) / 2 * dq)])
            G2 = np.concatenate([[0.0], np.cumsum((w2[1:] + w2[:-1]) / 2 * dq)])
            up1 = np.interp(uppers.ravel(), theta_grid, G1).reshape(uppers.shape)
            up2 = np.interp(uppers.ravel(), theta_grid, G2).reshape(uppers.shape)
            j1 = up1 - np.interp(X, theta_grid, G1)[None, :]
            j2 = up2 - np.interp(X, theta_grid, G2)[None, :]
            integrand = (b1_X[None, :] * j2 + b2_X[None, :] * j1) * weights
            inner = trapezoid(integrand, dx=dq, axis=1)
            vals[m] = trapezoid(inner, dx=dq / sqrt_gh)
        samples.append(vals)
    return order_estimate(
        eps_list, samples, statistic="sd", target=1.0, label="characteristic-integral"
    )


@dataclass
class CovarianceMatrixReport:
    empirical: np.ndarray
    target: np.ndarray
    se: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.empirical - self.target) <= 4 * self.se))


def verify_covariance_matrix(
    pair: ProcessPair,
    eps: float,
    n_realizations: int,
    seed: int,
    x_bar: float = 1.0,
) -> CovarianceMatrixReport:
    """Lemma 3.6a: cov of the unnormalized vector path at x_bar is x_bar*C."""
    length, n = _fine_grid_for(pair.spec1, eps, 2.2 * x_bar)
    ys = np.empty((n_realizations, 2))
    for m in range(n_realizations):
        r1, r2 = pair.sample_pair(length, n, _sub_seed(seed, m))
        ys[m, 0] = math.sqrt(eps) * r1.integral_to(x_bar / eps)
        ys[m, 1] = math.sqrt(eps) * r2.integral_to(x_bar / eps)
    emp = np.cov(ys.T, ddof=1)
    target = x_bar * pair.covariance_matrix()
    # normal-theory SEs of covariance entries
    v = np.diag(emp)
    se = np.empty((2, 2))
    for a in range(2):
        for b in range(2):
            se[a, b] = math.sqrt(
                (v[a] * v[b] + emp[a, b] ** 2) / (n_realizations - 1)
            )
    return CovarianceMatrixReport(empirical=emp, target=target, se=se)
