"""Stationary mixing bottom processes on the fine scale.

Three families:

- ``GaussianSpectralSpec``: Gaussian field with covariance
  rho(y) = sigma^2 exp(-y^2 / (2 ell^2)), synthesized spectrally on the
  periodic fine grid.  Reversible, so the third derivative moment vanishes.
- ``SkewedMASpec``: moving average beta(x) = sum_n f(x - n*Delta - U) xi_n
  over a lattice with a uniform random shift U (which restores exact
  stationarity) and centered skewed innovations.  Tunable third moment of
  the slope, hence nonzero growth coefficient b downstream.
- ``DerivedDerivativeSpec``: beta = d/dx gamma for an inner stationary
  process gamma; has vanishing integral-scale variance sigma_beta.

All families produce C^1 paths with the derivative computed analytically
(spectral for the Gaussian field, kernel derivative for the moving
average), never by finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import interpolate
from scipy.integrate import trapezoid

# periodization is acceptable only when the period dwarfs the correlation
# length; mixing families decorrelate structurally on scale ell
MIN_PERIOD_TO_ELL = 50.0

OVERSAMPLE = 8


class DegenerateSigmaError(RuntimeError):
    """Raised when sigma_beta is (numerically) zero and a Brownian limit
    is requested; the derivative-process regime applies instead."""


# ---------------------------------------------------------------------------
# process specifications


@dataclass(frozen=True)
class GaussianSpectralSpec:
    """Stationary Gaussian process with Gaussian-shaped covariance."""

    sigma: float
    ell: float

    kind = "gaussian-spectral"

    def __post_init__(self):
        if self.sigma < 0 or self.ell <= 0:
            raise ValueError("need sigma >= 0 and ell > 0")

    def covariance_deriv(self, y, r: int = 0):
        """Covariance of the r-th derivative process, (-1)^r rho^(2r)(y)."""
        y = np.asarray(y, dtype=float)
        s2, l2 = self.sigma**2, self.ell**2
        e = np.exp(-(y**2) / (2 * l2))
        if r == 0:
            return s2 * e
        if r == 1:
            return s2 * e * (1.0 / l2 - y**2 / l2**2)
        if r == 2:
            return s2 * e * (3.0 / l2**2 - 6.0 * y**2 / l2**3 + y**4 / l2**4)
        raise ValueError("derivative order > 2 not supported")

    def spectrum_deriv(self, k, r: int = 0):
        """Spectral density k^(2r) * sigma^2 ell sqrt(2 pi) exp(-k^2 ell^2/2)."""
        k = np.asarray(k, dtype=float)
        base = self.sigma**2 * self.ell * math.sqrt(2 * math.pi) * np.exp(
            -(k**2) * self.ell**2 / 2
        )
        return k ** (2 * r) * base

    def derivative_moment(self, r: int, p: int) -> float:
        """E((d^r beta / dx^r)^p) for p in {2, 3}; odd moments vanish."""
        if p == 2:
            return float(self.covariance_deriv(0.0, r))
        if p == 3:
            return 0.0
        raise ValueError("only second and third moments supported")

    def sigma_beta(self, r: int = 0) -> float:
        # 2 int_0^inf rho_r = spectrum at k = 0; zero for derivatives
        return math.sqrt(self.spectrum_deriv(0.0, 0)) if r == 0 else 0.0

    def sample_fields(self, length: float, n: int, rng, max_order: int = 1):
        """Spectral synthesis; returns [beta, beta', ...] up to max_order."""
        k = 2 * np.pi * np.fft.fftfreq(n, d=1.0 / n) / length
        half = n // 2
        chat = np.zeros(n, dtype=complex)
        a0 = rng.standard_normal()
        a = rng.standard_normal(half - 1)
        b = rng.standard_normal(half - 1)
        S = self.spectrum_deriv(k, 0)
        chat[0] = math.sqrt(S[0] / length) * a0 * n
        amp = np.sqrt(S[1:half] / (2 * length)) * n
        chat[1:half] = amp * (a + 1j * b)
        chat[-(half - 1):] = np.conj(chat[1:half][::-1])
        # Nyquist deliberately empty: resolvability demands >= 8 pts per ell
        out = []
        cur = chat
        for _ in range(max_order + 1):
            out.append(np.fft.ifft(cur).real)
            cur = cur * (1j * k)
        return out


def _c2_bump(v: np.ndarray, tilt: float, order: int) -> np.ndarray:
    """(1-v^2)^3 (1 + tilt*v) on |v|<1 and its first two derivatives."""
    inside = np.abs(v) < 1.0
    v = np.where(inside, v, 0.0)
    B = (1 - v**2) ** 3
    if order == 0:
        out = B * (1 + tilt * v)
    elif order == 1:
        Bp = -6 * v * (1 - v**2) ** 2
        out = Bp * (1 + tilt * v) + B * tilt
    elif order == 2:
        Bp = -6 * v * (1 - v**2) ** 2
        Bpp = -6 * (1 - v**2) ** 2 + 24 * v**2 * (1 - v**2)
        out = Bpp * (1 + tilt * v) + 2 * Bp * tilt
    else:
        raise ValueError("kernel derivatives beyond order 2 not available")
    return np.where(inside, out, 0.0)


@dataclass(frozen=True)
class SkewedMASpec:
    """Moving-average process over a randomly shifted lattice.

    The kernel is the compactly supported C^2 bump
    f(u) = (1 - (u/ell)^2)^3 (1 + tilt*u/ell) on |u| < ell.  A nonzero
    tilt together with skewed innovations produces E((dbeta/dx)^3) != 0.
    """

    sigma: float
    ell: float
    delta: float
    innovation: str = "exponential"  # or "gamma"
    gamma_shape: float = 2.0
    tilt: float = 0.0

    kind = "skewed-ma"

    # memory bound: kernel support may span at most this many lattice cells
    MAX_SUPPORT_CELLS = 64

    def __post_init__(self):
        if self.sigma <= 0 or self.ell <= 0 or self.delta <= 0:
            raise ValueError("need positive sigma, ell, delta")
        if self.innovation not in ("exponential", "gamma"):
            raise ValueError(f"unknown innovation law {self.innovation!r}")
        if 2 * self.ell > self.MAX_SUPPORT_CELLS * self.delta:
            raise ValueError(
                "kernel support exceeds the lattice memory bound "
                f"({2 * self.ell} > {self.MAX_SUPPORT_CELLS} * {self.delta})"
            )

    def kernel(self, u, order: int = 0):
        u = np.asarray(u, dtype=float)
        return _c2_bump(u / self.ell, self.tilt, order) / self.ell**order

    def _kernel_quad(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        u = np.linspace(-self.ell, self.ell, 4097)
        return float(trapezoid(fn(u), u))

    def _xi_moments(self) -> tuple[float, float]:
        """(E xi^2, E xi^3) for the unit-scale innovation law."""
        if self.innovation == "exponential":
            return 1.0, 2.0
        kshape = self.gamma_shape
        return 1.0, 2.0 / math.sqrt(kshape)

    def _xi_scale(self) -> float:
        # normalize so that E(beta^2) = sigma^2
        m2_unit, _ = self._xi_moments()
        int_f2 = self._kernel_quad(lambda u: self.kernel(u) ** 2)
        return self.sigma * math.sqrt(self.delta / (m2_unit * int_f2))

    def covariance_deriv(self, y, r: int = 0):
        y = np.asarray(y, dtype=float)
        s = self._xi_scale()
        m2u, _ = self._xi_moments()
        u = np.linspace(-self.ell, self.ell, 2049)
        fu = self.kernel(u, r)
        out = np.empty(y.shape or (1,))
        yy = np.atleast_1d(y)
        for i, yi in enumerate(yy):
            out[i] = trapezoid(fu * self.kernel(u + yi, r), u)
        out *= s**2 * m2u / self.delta
        return out.reshape(y.shape) if y.shape else float(out[0])

    def spectrum_deriv(self, k, r: int = 0):
        k = np.atleast_1d(np.asarray(k, dtype=float))
        s = self._xi_scale()
        m2u, _ = self._xi_moments()
        u = np.linspace(-self.ell, self.ell, 4097)
        fu = self.kernel(u)
        fhat2 = np.empty(k.shape)
        for i, ki in enumerate(k):
            cr = trapezoid(fu * np.cos(ki * u), u)
            ci = trapezoid(fu * np.sin(ki * u), u)
            fhat2[i] = cr**2 + ci**2
        out = s**2 * m2u / self.delta * fhat2 * k ** (2 * r)
        return out if out.size > 1 else float(out[0])

    def derivative_moment(self, r: int, p: int) -> float:
        s = self._xi_moments()
        scale = self._xi_scale()
        if p == 2:
            return (
                scale**2
                * s[0]
                / self.delta
                * self._kernel_quad(lambda u: self.kernel(u, r) ** 2)
            )
        if p == 3:
            return (
                scale**3
                * s[1]
                / self.delta
                * self._kernel_quad(lambda u: self.kernel(u, r) ** 3)
            )
        raise ValueError("only second and third moments supported")

    def sigma_beta(self, r: int = 0) -> float:
        if r > 0:
            return 0.0
        s = self._xi_scale()
        m2u, _ = self._xi_moments()
        int_f = self._kernel_quad(lambda u: self.kernel(u))
        return math.sqrt(s**2 * m2u / self.delta) * abs(int_f)

    def sample_fields(self, length: float, n: int, rng, max_order: int = 1):
        n_sites = length / self.delta
        if abs(n_sites - round(n_sites)) > 1e-9 * max(1.0, n_sites):
            raise ValueError("period must be an integer number of lattice cells")
        n_sites = int(round(n_sites))
        shift = rng.uniform(0.0, self.delta)
        if self.innovation == "exponential":
            xi = rng.standard_exponential(n_sites) - 1.0
        else:
            kshape = self.gamma_shape
            xi = (rng.gamma(kshape, 1.0, n_sites) - kshape) / math.sqrt(kshape)
        xi *= self._xi_scale()

        dx = length / n
        positions = shift + self.delta * np.arange(n_sites)
        w = int(np.ceil(2 * self.ell / dx)) + 3
        start = np.ceil((positions - self.ell) / dx).astype(int)
        idx = start[:, None] + np.arange(w)[None, :]
        u = idx * dx - positions[:, None]
        idx_wrapped = np.mod(idx, n).ravel()
        fields = []
        for order in range(max_order + 1):
            contrib = self.kernel(u, order) * xi[:, None]
            vals = np.zeros(n)
            np.add.at(vals, idx_wrapped, contrib.ravel())
            fields.append(vals)
        return fields


@dataclass(frozen=True)
class DerivedDerivativeSpec:
    """beta = d/dx gamma for an inner stationary spec; sigma_beta = 0."""

    inner: object

    kind = "derived-derivative"

    @property
    def sigma(self) -> float:
        return math.sqrt(self.inner.derivative_moment(1, 2))

    @property
    def ell(self) -> float:
        return self.inner.ell

    def covariance_deriv(self, y, r: int = 0):
        return self.inner.covariance_deriv(y, r + 1)

    def spectrum_deriv(self, k, r: int = 0):
        return self.inner.spectrum_deriv(k, r + 1)

    def derivative_moment(self, r: int, p: int) -> float:
        return self.inner.derivative_moment(r + 1, p)

    def sigma_beta(self, r: int = 0) -> float:
        return 0.0

    def sample_fields(self, length: float, n: int, rng, max_order: int = 1):
        return self.inner.sample_fields(length, n, rng, max_order + 1)[1:]


# ---------------------------------------------------------------------------
# realizations


@dataclass
class BottomRealization:
    """One sampled bottom path on the periodic fine grid."""

    spec: object
    length: float
    n: int
    seed: int
    values: np.ndarray
    deriv_values: np.ndarray

    _interp: Optional[object] = field(default=None, repr=False)
    _interp_d: Optional[object] = field(default=None, repr=False)
    _cumint: Optional[np.ndarray] = field(default=None, repr=False)
    _linear: Optional[tuple] = field(default=None, repr=False)
    _linear_d: Optional[tuple] = field(default=None, repr=False)

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    def _oversampled(self, order: int, factor: int) -> np.ndarray:
        if getattr(self.spec, "kind", "") == "skewed-ma" or (
            getattr(self.spec, "kind", "") == "derived-derivative"
            and self.spec.inner.kind == "skewed-ma"
        ):
            # kernel interpolant: re-evaluate the kernel sum exactly
            rng = np.random.default_rng(self.seed)
            fields = self.spec.sample_fields(self.length, factor * self.n, rng, order)
            return fields[order]
        base = self.values if order == 0 else self.deriv_values
        chat = np.fft.fft(base)
        big = np.zeros(factor * self.n, dtype=complex)
        half = self.n // 2
        big[:half] = chat[:half]
        big[-half:] = chat[-half:]
        return np.fft.ifft(big).real * factor

    def _build_interp(self, order: int):
        nos = OVERSAMPLE * self.n
        vals = self._oversampled(order, OVERSAMPLE)
        x = np.arange(nos + 1) * (self.length / nos)
        y = np.concatenate([vals, vals[:1]])
        return interpolate.make_interp_spline(x, y, k=5, bc_type="periodic")

    def eval(self, x) -> np.ndarray:
        """beta at arbitrary positions (periodic)."""
        if self._interp is None:
            self._interp = self._build_interp(0)
        return self._interp(np.mod(x, self.length))

    def deriv_at(self, x) -> np.ndarray:
        if self._interp_d is None:
            self._interp_d = self._build_interp(1)
        return self._interp_d(np.mod(x, self.length))

    def eval_linear(self, x, order: int = 0) -> np.ndarray:
        """Cheap evaluation: linear interpolation of a 16x-oversampled cache.

        Adequate for Monte Carlo statistics (relative error ~ 3e-4); use
        ``eval`` where C^4 smoothness matters (characteristic flows).
        """
        cache = self._linear if order == 0 else self._linear_d
        if cache is None:
            factor = 2 * OVERSAMPLE
            vals = self._oversampled(order, factor)
            cache = (np.concatenate([vals, vals[:1]]), self.length / (factor * self.n))
            if order == 0:
                self._linear = cache
            else:
                self._linear_d = cache
        vals, dx = cache
        pos = np.mod(x, self.length) / dx
        idx = np.minimum(pos.astype(int), len(vals) - 2)
        frac = pos - idx
        return vals[idx] * (1 - frac) + vals[idx + 1] * frac

    def eval_exact(self, x, order: int = 0) -> np.ndarray:
        """Direct evaluation of the trigonometric/kernel interpolant (slow)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if getattr(self.spec, "kind", "") == "skewed-ma":
            raise NotImplementedError("use eval(); MA interpolants are exact")
        base = self.values if order == 0 else self.deriv_values
        chat = np.fft.fft(base) / self.n
        k = 2 * np.pi * np.fft.fftfreq(self.n, d=1.0 / self.n) / self.length
        chat[self.n // 2] = 0.0
        out = np.zeros(x.shape, dtype=complex)
        for m in range(self.n):
            if chat[m] != 0:
                out += chat[m] * np.exp(1j * k[m] * x)
        return out.real

    def integral_to(self, x) -> np.ndarray:
        """Cumulative trapezoid integral int_0^x beta, any real x."""
        if self._cumint is None:
            c = np.zeros(self.n + 1)
            dx = self.spacing
            vals = np.concatenate([self.values, self.values[:1]])
            c[1:] = np.cumsum((vals[1:] + vals[:-1]) / 2 * dx)
            self._cumint = c
        x = np.asarray(x, dtype=float)
        per = self._cumint[-1]
        wraps = np.floor(x / self.length)
        rem = x - wraps * self.length
        grid = np.arange(self.n + 1) * self.spacing
        local = np.interp(rem, grid, self._cumint)
        return wraps * per + local

    def mean_bound(self) -> float:
        """Empirical zero-mean tolerance 3 sigma / sqrt(L/ell)."""
        return 3.0 * self.spec.sigma / math.sqrt(self.length / self.spec.ell)

    def validate(self) -> None:
        if abs(self.values.mean()) >= self.mean_bound():
            raise ValueError("realization mean exceeds the zero-mean bound")


def sample(spec, length: float, n: int, seed: int) -> BottomRealization:
    """Draw one realization; deterministic given (spec, seed)."""
    if length / spec.ell < MIN_PERIOD_TO_ELL:
        raise ValueError(
            f"period/ell = {length / spec.ell:.1f} below the required "
            f"{MIN_PERIOD_TO_ELL:.0f}"
        )
    if n % 2 != 0 or n < 16:
        raise ValueError("fine grid size must be even and >= 16")
    rng = np.random.default_rng(seed)
    fields = spec.sample_fields(length, n, rng, max_order=1)
    return BottomRealization(
        spec=spec,
        length=length,
        n=n,
        seed=seed,
        values=fields[0],
        deriv_values=fields[1],
    )


# ---------------------------------------------------------------------------
# statistics estimation


@dataclass
class ProcessStats:
    """Estimated (or analytic) one-point and integral statistics."""

    lags: np.ndarray
    rho: np.ndarray
    sigma_beta: float
    m2: float
    d2: float
    d3: float
    se_sigma_beta: float = 0.0
    se_m2: float = 0.0
    se_d2: float = 0.0
    se_d3: float = 0.0

    def rho_at(self, y):
        return np.interp(np.abs(y), self.lags, self.rho, right=0.0)


def analytic_stats(spec, max_lag: float | None = None, n_lags: int = 512) -> ProcessStats:
    """ProcessStats from the spec's closed-form/quadrature statistics."""
    if max_lag is None:
        max_lag = 10 * spec.ell
    lags = np.linspace(0.0, max_lag, n_lags)
    rho = np.asarray(spec.covariance_deriv(lags, 0), dtype=float)
    return ProcessStats(
        lags=lags,
        rho=rho,
        sigma_beta=spec.sigma_beta(),
        m2=spec.derivative_moment(0, 2),
        d2=spec.derivative_moment(1, 2),
        d3=spec.derivative_moment(1, 3),
    )


def _circular_autocov(values: np.ndarray) -> np.ndarray:
    n = len(values)
    fhat = np.fft.rfft(values)
    return np.fft.irfft(np.abs(fhat) ** 2, n) / n


def _moments(values: np.ndarray, deriv: np.ndarray):
    return values @ values / len(values), deriv @ deriv / len(deriv), (
        deriv**3
    ).mean()


def estimate_stats(
    real: BottomRealization,
    max_lag: float,
    n_bootstrap: int = 100,
) -> ProcessStats:
    """Spatial-average statistics with moving-block bootstrap errors."""
    ell = real.spec.ell
    if max_lag < 10 * ell:
        raise ValueError("max_lag must be at least 10 correlation lengths")
    if max_lag > real.length / 2:
        raise ValueError("max_lag exceeds half the fine period")

    dx = real.spacing
    nlag = int(max_lag / dx)
    lags = np.arange(nlag + 1) * dx

    cov = _circular_autocov(real.values)[: nlag + 1]
    sigma2 = 2.0 * trapezoid(cov, dx=dx)
    m2, d2, d3 = _moments(real.values, real.deriv_values)

    # moving-block bootstrap, block length 10 ell
    block = max(4, int(10 * ell / dx))
    nblocks = real.n // block
    rng = np.random.default_rng(np.uint64(real.seed) ^ np.uint64(0x9E3779B97F4A7C15))
    boot = np.empty((n_bootstrap, 4))
    for b in range(n_bootstrap):
        starts = rng.integers(0, real.n, nblocks)
        idx = (starts[:, None] + np.arange(block)[None, :]).ravel() % real.n
        v, d = real.values[idx], real.deriv_values[idx]
        cb = _circular_autocov(v)[: nlag + 1]
        boot[b, 0] = 2.0 * trapezoid(cb, dx=dx)
        boot[b, 1:] = _moments(v, d)

    sig = math.sqrt(max(sigma2, 0.0))
    se = boot.std(axis=0, ddof=1)
    se_sigma = se[0] / (2 * sig) if sig > 0 else math.sqrt(max(se[0], 0.0))
    return ProcessStats(
        lags=lags,
        rho=cov,
        sigma_beta=sig,
        m2=m2,
        d2=d2,
        d3=d3,
        se_sigma_beta=se_sigma,
        se_m2=se[1],
        se_d2=se[2],
        se_d3=se[3],
    )


def estimate_sigma_trend(
    spec,
    windows,
    seed: int,
    n_realizations: int = 48,
) -> list[tuple[float, float]]:
    """CLT-scale estimate of sigma_beta per integration window.

    For each window W the statistic is the standard deviation over disjoint
    segments of W^{-1/2} * int_segment beta, which converges to sigma_beta
    for a mixing process and decays ~ W^{-1/2} for derivative processes.
    """
    windows = sorted(float(w) for w in windows)
    if not windows:
        return []
    w_max = windows[-1]
    length = max(8 * w_max, MIN_PERIOD_TO_ELL * spec.ell)
    n = int(2 ** math.ceil(math.log2(max(length / spec.ell * 8, 256))))
    out = []
    sums_cache = []
    for i in range(n_realizations):
        real = sample(spec, length, n, seed + i)
        c = real.integral_to(np.arange(0, n + 1) * real.spacing)
        sums_cache.append((c, real.spacing))
    for w in windows:
        samples = []
        for c, dx in sums_cache:
            nseg = int(length // w)
            if nseg < 1:
                continue
            idx = np.round(np.arange(nseg + 1) * w / dx).astype(int)
            idx = np.clip(idx, 0, len(c) - 1)
            seg = np.diff(c[idx])
            samples.extend(seg / math.sqrt(w))
        samples = np.asarray(samples)
        out.append((w, float(np.sqrt(np.mean(samples**2)))))
    return out


def export_realization(real: BottomRealization, path_prefix: str) -> tuple[str, str]:
    """Raw little-endian float64 dump plus a text metadata sidecar."""
    raw_path = f"{path_prefix}.f64"
    meta_path = f"{path_prefix}.meta"
    both = np.stack([real.values, real.deriv_values])
    both.astype("<f8").tofile(raw_path)
    spec = real.spec
    lines = [
        "format = randkdv-bottom-v1",
        "dtype = little-endian float64",
        f"shape = 2 x {real.n}",
        "rows = beta, dbeta_dx",
        f"period_length = {real.length!r}",
        f"n_nodes = {real.n}",
        f"seed = {real.seed}",
        f"spec_kind = {spec.kind}",
        f"spec_sigma = {spec.sigma!r}",
        f"spec_ell = {spec.ell!r}",
    ]
    if spec.kind == "skewed-ma":
        lines += [
            f"spec_delta = {spec.delta!r}",
            f"spec_innovation = {spec.innovation}",
            f"spec_tilt = {spec.tilt!r}",
        ]
    if spec.kind == "derived-derivative":
        lines.append(f"inner_kind = {spec.inner.kind}")
    with open(meta_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return raw_path, meta_path
