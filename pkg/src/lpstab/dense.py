"""Dense-matrix versions of the spectral operators for small grids.

Everything here is assembled from explicit exponential sums and an explicit
coefficient-convolution matrix; no FFT and no zero padding is involved.  It
serves as an independent reference for the fast implementations.
"""
from __future__ import annotations

import numpy as np

from .grid import PeriodicGrid
from .littlewood_paley import chi


def _freqs(n):
    return np.arange(-n // 2, n // 2)


def analysis_matrix(grid: PeriodicGrid) -> np.ndarray:
    """Samples -> coefficients ``c_xi = (1/n) sum_j f_j exp(-i xi x_j)`` (xi ascending)."""
    n = grid.n_points
    return np.exp(-1j * np.outer(_freqs(n), grid.x)) / n


def synthesis_matrix(grid: PeriodicGrid) -> np.ndarray:
    n = grid.n_points
    return np.exp(1j * np.outer(grid.x, _freqs(n)))


def multiplier_matrix(grid: PeriodicGrid, symbol_fn) -> np.ndarray:
    xi = _freqs(grid.n_points).astype(float)
    mat = synthesis_matrix(grid) @ np.diag(symbol_fn(xi)) @ analysis_matrix(grid)
    return mat.real if np.allclose(mat.imag, 0, atol=1e-12) else mat


def s_matrix(grid: PeriodicGrid, k: int) -> np.ndarray:
    if k < 0:
        return np.zeros((grid.n_points, grid.n_points))
    return multiplier_matrix(grid, lambda xi: chi(np.abs(xi) / 2.0**k))


def delta_matrix(grid: PeriodicGrid, k: int) -> np.ndarray:
    return s_matrix(grid, k) - s_matrix(grid, k - 1)


def derivative_matrix(grid: PeriodicGrid) -> np.ndarray:
    n = grid.n_points

    def sym(xi):
        out = 1j * xi
        out[np.abs(xi) == n // 2] = 0.0
        return out

    return multiplier_matrix(grid, sym).real


def product_matrix(grid: PeriodicGrid, b_values) -> np.ndarray:
    """Matrix of ``u -> P(b u)`` built by convolving Fourier coefficients.

    Both factors lose their Nyquist mode and the output is restricted to
    ``|xi| <= n/2 - 1``.
    """
    n = grid.n_points
    xi = _freqs(n)
    bc = analysis_matrix(grid) @ np.asarray(b_values, dtype=float)
    bmap = {int(k): c for k, c in zip(xi, bc) if abs(k) < n // 2}
    conv = np.zeros((n, n), dtype=complex)
    for i, p in enumerate(xi):
        if abs(p) >= n // 2:
            continue
        for j, q in enumerate(xi):
            if abs(q) >= n // 2:
                continue
            conv[i, j] = bmap.get(int(p - q), 0.0)
    return (synthesis_matrix(grid) @ conv @ analysis_matrix(grid)).real


def paraproduct_matrix(grid: PeriodicGrid, a_values, m: int) -> np.ndarray:
    a_values = np.asarray(a_values, dtype=float)
    total = product_matrix(grid, s_matrix(grid, m - 1) @ a_values) @ s_matrix(grid, m + 2)
    for k in range(m + 3, grid.k_max + 1):
        total = total + product_matrix(grid, s_matrix(grid, k - 3) @ a_values) @ delta_matrix(grid, k)
    return total


def cm_commutator_matrix(grid: PeriodicGrid, nu: int, b_values) -> np.ndarray:
    """``[Delta_nu, b] d_x`` as a dense matrix."""
    dn = delta_matrix(grid, nu)
    mb = product_matrix(grid, b_values)
    d = derivative_matrix(grid)
    return dn @ mb @ d - mb @ dn @ d
