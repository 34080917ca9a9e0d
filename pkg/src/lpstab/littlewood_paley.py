"""Smooth dyadic partition of unity on the periodic grid.

The cutoff ``chi`` equals one on ``|s| <= 1.1`` and vanishes on ``|s| >= 1.9``.
Low-pass operators are ``S_k = chi(2^-k |xi|)`` (with ``S_-1 = 0``) and the
blocks are ``Delta_0 = S_0``, ``Delta_k = S_k - S_{k-1}``.  On a grid with
``n`` points the blocks run up to ``k_max = log2(n) - 1``; ``S_{k_max}`` is
already the identity on the resolved band, so the truncation residual is
identically zero.  It is still carried explicitly so completeness checks
never silently depend on that fact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, PeriodicGrid, derivative, l2_norm, linf_norm

PLATEAU_EDGE = 1.1
SUPPORT_EDGE = 1.9


class UndefinedRatioError(ValueError):
    """Raised when a ratio is requested for a zero denominator."""


def _h(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def chi(s):
    """Smooth even cutoff: 1 on ``|s| <= 1.1``, 0 on ``|s| >= 1.9``.

    Built from the standard ``exp(-1/t)`` gluing function, so it is
    ``C^infinity`` and exactly 0/1 outside the transition band.
    """
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValueError("chi requires finite arguments")
    t = (SUPPORT_EDGE - np.abs(s)) / (SUPPORT_EDGE - PLATEAU_EDGE)
    t = np.clip(t, 0.0, 1.0)
    num = _h(t)
    val = num / (num + _h(1.0 - t))
    val = np.clip(val, 0.0, 1.0)
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class CutoffProfile:
    plateau_edge: float = PLATEAU_EDGE
    support_edge: float = SUPPORT_EDGE

    def __call__(self, s):
        return chi(s)


def _check_k(grid: PeriodicGrid, k: int, lowest: int):
    if not lowest <= k <= grid.k_max:
        raise ValueError(f"block index {k} outside [{lowest}, {grid.k_max}]")


def s_symbol(grid: PeriodicGrid, k: int) -> np.ndarray:
    """Symbol of ``S_k`` at the grid frequencies (zero for ``k < 0``)."""
    if k < 0:
        return np.zeros(grid.n_points)
    return chi(np.abs(grid.xi) / 2.0**k)


def delta_symbol(grid: PeriodicGrid, k: int) -> np.ndarray:
    return s_symbol(grid, k) - s_symbol(grid, k - 1)


def s_op(k: int, f: Field) -> Field:
    """Low-pass ``S_k f``; ``k = -1`` gives the zero field."""
    _check_k(f.grid, k, -1)
    if k == -1:
        return f.grid.zeros()
    return f.grid.from_spectrum(f.spectrum * s_symbol(f.grid, k))


def delta_op(k: int, f: Field) -> Field:
    """Dyadic block ``Delta_k f``."""
    _check_k(f.grid, k, 0)
    return f.grid.from_spectrum(f.spectrum * delta_symbol(f.grid, k))


def annulus_mask(grid: PeriodicGrid, k: int) -> np.ndarray:
    """Frequencies where ``Delta_k`` may be nonzero."""
    a = np.abs(grid.xi)
    if k == 0:
        return a <= SUPPORT_EDGE
    return (a >= PLATEAU_EDGE * 2.0 ** (k - 1)) & (a <= SUPPORT_EDGE * 2.0**k)


@dataclass(frozen=True)
class BlockDecomposition:
    blocks: tuple
    k_max: int
    residual: Field

    def reconstruct(self) -> Field:
        total = self.residual.values.copy()
        for b in self.blocks:
            total = total + b.values
        return Field(self.residual.grid, total)

    def block_norms(self) -> np.ndarray:
        return np.array([l2_norm(b) for b in self.blocks])


def decompose(f: Field) -> BlockDecomposition:
    grid = f.grid
    blocks = tuple(delta_op(k, f) for k in range(grid.k_max + 1))
    residual = grid.from_spectrum(f.spectrum * (1.0 - s_symbol(grid, grid.k_max)))
    return BlockDecomposition(blocks=blocks, k_max=grid.k_max, residual=residual)


def annulus_leakage(block: Field, k: int) -> float:
    """Largest spectral magnitude of ``block`` outside annulus ``k``, relative to inside."""
    mask = annulus_mask(block.grid, k)
    mag = np.abs(block.spectrum)
    inside = mag[mask].max() if mask.any() else 0.0
    outside = mag[~mask].max() if (~mask).any() else 0.0
    if inside == 0.0:
        return 0.0 if outside == 0.0 else np.inf
    return float(outside / inside)


def bernstein_ratio(block: Field, nu: int) -> float:
    """``||d_x block|| / ||block||`` from the spectrum.

    The derivative norm is taken spectrally with the Nyquist mode weighted
    by ``n/2``, i.e. as the norm of the continuum derivative of the
    trigonometric interpolant.
    """
    if nu < 1:
        raise ValueError("nu must be >= 1")
    coeffs = block.coefficients
    norm = np.sqrt(np.sum(np.abs(coeffs) ** 2))
    if norm == 0.0:
        raise UndefinedRatioError("bernstein ratio undefined for a zero block")
    grad = np.sqrt(np.sum(block.grid.xi**2 * np.abs(coeffs) ** 2))
    return float(grad / norm)


def dyadic_sobolev_norm(f: Field, sigma: float) -> float:
    """``l^2`` norm of the sequence ``2^(k sigma) ||Delta_k f||``.

    The residual, if any, is weighted as block ``k_max + 1``.
    """
    if abs(sigma) > 2:
        raise ValueError(f"|sigma| must be <= 2, got {sigma}")
    grid = f.grid
    # ||Delta_k f||^2 computed from the spectrum: sum |symbol_k * f_hat|^2
    coeffs2 = np.abs(f.coefficients) ** 2
    total = 0.0
    for k in range(grid.k_max + 1):
        total += 4.0 ** (k * sigma) * np.sum(delta_symbol(grid, k) ** 2 * coeffs2)
    res = 1.0 - s_symbol(grid, grid.k_max)
    total += 4.0 ** ((grid.k_max + 1) * sigma) * np.sum(res**2 * coeffs2)
    return float(np.sqrt(total))


def lip_dyadic_profile(a: Field) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(2^k ||Delta_k a||_inf, ||d_x S_k a||_inf)`` for ``k = 0..k_max``."""
    ks = range(a.grid.k_max + 1)
    high = np.array([2.0**k * linf_norm(delta_op(k, a)) for k in ks])
    low = np.array([linf_norm(derivative(s_op(k, a), 1)) for k in ks])
    return high, low


def smooth_triangle(x, lipschitz: float = 5.0, rounding: float = 0.95):
    """Smoothed triangle wave with slope bounded by ``lipschitz``.

    ``L * arcsin(r sin x) / r`` has derivative ``L cos x / sqrt(1 - r^2 sin^2 x)``,
    whose maximum ``L`` is attained at ``x = 0``.
    """
    return lipschitz * np.arcsin(rounding * np.sin(x)) / rounding
