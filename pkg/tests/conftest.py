import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def dense_dft_matrix(n: int) -> np.ndarray:
    """Explicit DFT matrix, independent of np.fft code paths."""
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n)


def dense_multiplier_matrix(grid, symbol) -> np.ndarray:
    """Dense matrix of a Fourier multiplier: inverse-DFT diag(m) DFT."""
    n = grid.n
    W = dense_dft_matrix(n)
    Winv = W.conj().T / n
    return Winv @ np.diag(symbol(grid.wavenumbers)) @ W


def smooth_random_field(grid, rng, decay=4.0):
    """Random real field with smoothly decaying spectrum, no Nyquist content."""
    n = grid.n
    coef = np.zeros(n, dtype=complex)
    for m in range(1, n // 2):
        z = (rng.standard_normal() + 1j * rng.standard_normal()) * np.exp(-m / decay)
        coef[m] = z
        coef[n - m] = np.conj(z)
    coef[0] = rng.standard_normal()
    vals = np.fft.ifft(coef).real * n
    return vals / max(1.0, np.max(np.abs(vals)))
