"""Periodic 1-D spectral grids and Fourier-multiplier operators.

Everything here lives on an equispaced periodic grid.  Multipliers with
even real symbols (k*tanh(h*k), sech(h*k), k**2, ...) map real fields to
real fields; odd derivatives are handled by ``derivative``.  The two
bottom-correction operators of the Dirichlet-Neumann expansion,

    L1(beta) = -sech(hD) [ beta * sech(hD) d/dx ]
    L2(beta) = -sech(hD) [ beta * (D tanh(hD)) [ beta * sech(hD) d/dx ] ]

are composed from these primitives, with the single first-order factor
realized as the spectral derivative so that real input gives real output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Relative size of the imaginary residue tolerated after an inverse
# transform before the field is declared corrupted.
IMAG_TOL = 1e-12

MAX_DERIVATIVE_ORDER = 4

# two-thirds rule: retain |m| <= n/3
DEALIAS_FRACTION = 1.0 / 3.0


@dataclass(frozen=True)
class SpectralGrid:
    """Equispaced periodic grid on [0, length)."""

    length: float
    n: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    wavenumbers: np.ndarray = field(init=False, repr=False, compare=False)
    modes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError(f"grid length must be positive, got {self.length}")
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"grid size must be even and >= 8, got {self.n}")
        nodes = np.arange(self.n) * (self.length / self.n)
        modes = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(int)
        k = 2.0 * np.pi * modes / self.length
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "wavenumbers", k)

    @property
    def spacing(self) -> float:
        return self.length / self.n

    def __eq__(self, other):
        return (
            isinstance(other, SpectralGrid)
            and self.length == other.length
            and self.n == other.n
        )

    def __hash__(self):
        return hash((self.length, self.n))


@dataclass(frozen=True)
class GridFunction:
    """Real field sampled on a SpectralGrid."""

    grid: SpectralGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(
                f"values shape {vals.shape} does not match grid size {self.grid.n}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function contains non-finite values")
        object.__setattr__(self, "values", vals)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _check_same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * a)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Multiplier:
    """Fourier multiplier with a real, even symbol m(k)."""

    symbol: Callable[[np.ndarray], np.ndarray]
    name: str

    def on_grid(self, grid: SpectralGrid) -> np.ndarray:
        m = np.asarray(self.symbol(grid.wavenumbers), dtype=float)
        if m.shape != grid.wavenumbers.shape or not np.all(np.isfinite(m)):
            raise ValueError(f"symbol {self.name!r} undefined at a grid wavenumber")
        # even symbols are what makes real fields map to real fields
        m_neg = np.asarray(self.symbol(-grid.wavenumbers), dtype=float)
        if not np.allclose(m, m_neg, rtol=0, atol=1e-13 * (1 + np.max(np.abs(m)))):
            raise ValueError(f"symbol {self.name!r} is not even")
        return m


def d_tanh_hd(h: float) -> Multiplier:
    """Flat-bottom Dirichlet-Neumann symbol k*tanh(h*k)."""
    return Multiplier(lambda k: k * np.tanh(h * k), f"D tanh({h}D)")


def sech_hd(h: float) -> Multiplier:
    return Multiplier(lambda k: 1.0 / np.cosh(h * k), f"sech({h}D)")


def d_squared() -> Multiplier:
    return Multiplier(lambda k: k**2, "D^2")


def d_fourth() -> Multiplier:
    return Multiplier(lambda k: k**4, "D^4")


def _to_real(fhat_out: np.ndarray, reference_scale: float = 0.0) -> np.ndarray:
    """Inverse transform and strip the imaginary residue, or fail loudly."""
    out = np.fft.ifft(fhat_out)
    scale = max(np.max(np.abs(out)), reference_scale)
    if scale == 0.0:
        return np.zeros(out.shape)
    residue = np.max(np.abs(out.imag))
    if residue > IMAG_TOL * scale:
        raise ValueError(
            f"imaginary residue {residue:.3e} exceeds {IMAG_TOL:g} of max-norm {scale:.3e}"
        )
    return out.real


def apply_multiplier(f: GridFunction, m: Multiplier) -> GridFunction:
    """Apply m(D): inverse transform of m(k_j) * fhat(k_j)."""
    mk = m.on_grid(f.grid)
    fhat = np.fft.fft(f.values)
    return GridFunction(f.grid, _to_real(mk * fhat))


def derivative(f: GridFunction, order: int = 1) -> GridFunction:
    """Spectral d^order/dx^order; Nyquist mode zeroed for odd orders."""
    if not 1 <= order <= MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivative order must be in 1..{MAX_DERIVATIVE_ORDER}")
    k = f.grid.wavenumbers
    sym = (1j * k) ** order
    if order % 2 == 1:
        sym = sym.copy()
        sym[f.grid.n // 2] = 0.0
    fhat = np.fft.fft(f.values)
    return GridFunction(f.grid, _to_real(sym * fhat, np.max(np.abs(f.values))))


def dealias(f: GridFunction) -> GridFunction:
    """Zero all coefficients with |m_j| > n/3 (two-thirds rule)."""
    cutoff = f.grid.n * DEALIAS_FRACTION
    fhat = np.fft.fft(f.values)
    fhat[np.abs(f.grid.modes) > cutoff] = 0.0
    return GridFunction(f.grid, _to_real(fhat, np.max(np.abs(f.values))))


def _check_same_grid(a: GridFunction, b: GridFunction) -> None:
    if a.grid != b.grid:
        raise ValueError("grid mismatch between fields")


def apply_L1(beta: GridFunction, xi: GridFunction, h: float) -> GridFunction:
    """First bottom-correction operator, -sech(hD)[beta * sech(hD) dxi/dx]."""
    _check_same_grid(beta, xi)
    if h <= 0:
        raise ValueError("depth h must be positive")
    sech = sech_hd(h)
    inner = apply_multiplier(derivative(xi, 1), sech)
    mixed = GridFunction(xi.grid, beta.values * inner.values)
    return -1.0 * apply_multiplier(mixed, sech)


def apply_L2(beta: GridFunction, xi: GridFunction, h: float) -> GridFunction:
    """Second bottom correction, -sech(hD) beta Dtanh(hD) beta sech(hD) d/dx."""
    _check_same_grid(beta, xi)
    if h <= 0:
        raise ValueError("depth h must be positive")
    sech = sech_hd(h)
    dtanh = d_tanh_hd(h)
    u = apply_multiplier(derivative(xi, 1), sech)
    u = GridFunction(xi.grid, beta.values * u.values)
    u = apply_multiplier(u, dtanh)
    u = GridFunction(xi.grid, beta.values * u.values)
    return -1.0 * apply_multiplier(u, sech)


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """Discrete L2 inner product over the period."""
    _check_same_grid(f, g)
    return float(np.dot(f.values, g.values)) * f.grid.spacing


def antiderivative_zero_mean(f: GridFunction) -> GridFunction:
    """Spectral antiderivative of the zero-mean part of f, itself zero-mean.

    The Nyquist mode is dropped, mirroring the odd-derivative convention.
    """
    fhat = np.fft.fft(f.values)
    k = f.grid.wavenumbers
    out = np.zeros_like(fhat)
    nz = k != 0
    out[nz] = fhat[nz] / (1j * k[nz])
    out[f.grid.n // 2] = 0.0
    return GridFunction(f.grid, _to_real(out, np.max(np.abs(f.values))))
