"""Bony's paraproduct, its modified form and the associated remainders.

Products
--------
Every product in this module is the exact product of the trigonometric
interpolants, projected back onto the open band ``|xi| < n/2``.  Inputs are
first stripped of their Nyquist mode, the product is formed on a grid of
``2n`` points (which is alias-free for two Nyquist-free factors) and then
truncated.  The resulting bilinear map ``band_product`` is symmetric with
respect to the grid inner product, so transposes of operators built from it
are available in closed form.

Operator layout
---------------
``T_a^m u = S_{m-1}a S_{m+2}u + sum_{k >= m+3} S_{k-3}a Delta_k u`` is stored
as a list of ``(symbol applied to a, symbol applied to u)`` pairs, which
gives the operator, its transpose and its commutators with ``Delta_nu`` from
one description.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, PeriodicGrid, derivative, l2_norm, linf_norm, lip_norm, random_field
from .littlewood_paley import delta_symbol, s_symbol


# ---------------------------------------------------------------------------
# band-limited products
# ---------------------------------------------------------------------------

def _strip_nyquist(coeffs: np.ndarray) -> np.ndarray:
    out = np.array(coeffs, dtype=complex)
    out[len(out) // 2] = 0.0
    return out


def band_product_spectrum(spec_a: np.ndarray, spec_b: np.ndarray) -> np.ndarray:
    """Spectrum of the projected product of two fields given by their spectra."""
    n = spec_a.shape[-1]
    half = n // 2
    big = 2 * n
    pa = np.zeros(big, dtype=complex)
    pb = np.zeros(big, dtype=complex)
    # coefficients -> padded spectra for a 2n-point grid (scaled by 2n/n = 2)
    for src, dst in ((spec_a, pa), (spec_b, pb)):
        s = _strip_nyquist(src)
        dst[:half] = 2.0 * s[:half]
        dst[big - half + 1:] = 2.0 * s[half + 1:]
    prod = np.fft.ifft(pa).real * np.fft.ifft(pb).real
    fp = np.fft.fft(prod) / 2.0
    out = np.zeros(n, dtype=complex)
    out[:half] = fp[:half]
    out[half + 1:] = fp[big - half + 1:]
    return out


def band_product(a: Field, b: Field) -> Field:
    """Projected product of the band-limited interpolants of ``a`` and ``b``."""
    _same_grid(a, b)
    return a.grid.from_spectrum(band_product_spectrum(a.spectrum, b.spectrum))


def band_project(f: Field) -> Field:
    """Drop the Nyquist mode (the range of every product in this module)."""
    return f.grid.from_spectrum(_strip_nyquist(f.spectrum))


def _same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise ValueError("fields live on different grids")


# ---------------------------------------------------------------------------
# modified paraproduct
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParaproductConfig:
    grid: PeriodicGrid
    m: int

    def __post_init__(self):
        if not 0 <= self.m <= self.grid.k_max - 3:
            raise ValueError(
                f"modification parameter m={self.m} outside [0, {self.grid.k_max - 3}]"
            )

    def terms(self):
        """``(a-symbol, u-symbol, label)`` triples whose products sum to ``T_a^m u``.

        The label is the block index ``k`` of the ``u`` factor, with the head
        term ``S_{m-1}a S_{m+2}u`` labelled ``-1``.
        """
        g, m = self.grid, self.m
        out = [(s_symbol(g, m - 1), s_symbol(g, m + 2), -1)]
        for k in range(m + 3, g.k_max + 1):
            out.append((s_symbol(g, k - 3), delta_symbol(g, k), k))
        return out


def _check_m(grid: PeriodicGrid, m: int) -> ParaproductConfig:
    if not isinstance(m, (int, np.integer)) or m < 0:
        raise ValueError(f"m must be a nonnegative integer, got {m!r}")
    return ParaproductConfig(grid, int(m))


def modified_paraproduct(a: Field, u: Field, m: int) -> Field:
    """``T_a^m u``."""
    _same_grid(a, u)
    cfg = _check_m(a.grid, m)
    total = np.zeros(a.grid.n_points, dtype=complex)
    for sa, su, _ in cfg.terms():
        total += band_product_spectrum(a.spectrum * sa, u.spectrum * su)
    return a.grid.from_spectrum(total)


def bony_paraproduct(a: Field, u: Field) -> Field:
    """Bony's paraproduct ``T_a u = T_a^0 u``."""
    return modified_paraproduct(a, u, 0)


def paraproduct_adjoint(a: Field, w: Field, m: int) -> Field:
    """Transpose of ``u -> T_a^m u`` in the grid inner product.

    Each term ``P(b_k Q_k u)`` has transpose ``Q_k P(b_k w)`` because the
    projected product is symmetric and ``Q_k`` is a real even multiplier.
    """
    _same_grid(a, w)
    cfg = _check_m(a.grid, m)
    total = np.zeros(a.grid.n_points, dtype=complex)
    for sa, su, _ in cfg.terms():
        total += su * band_product_spectrum(a.spectrum * sa, w.spectrum)
    return a.grid.from_spectrum(total)


def remainder(a: Field, u: Field, m: int) -> Field:
    """``a u - T_a^m u`` with the projected product."""
    if m < 3:
        raise ValueError("remainder requires m >= 3")
    return band_product(a, u) - modified_paraproduct(a, u, m)


def _omega(a: Field, u: Field, m: int, which: int) -> Field:
    if m < 3:
        raise ValueError("remainder pieces require m >= 3")
    _same_grid(a, u)
    g = a.grid
    total = np.zeros(g.n_points, dtype=complex)
    for k in range(m, g.k_max + 1):
        if which == 1:
            su = s_symbol(g, k - 3)
        else:
            su = s_symbol(g, k + 2) - s_symbol(g, k - 3)
        total += band_product_spectrum(a.spectrum * delta_symbol(g, k), u.spectrum * su)
    return g.from_spectrum(total)


def omega1(a: Field, u: Field, m: int) -> Field:
    """``sum_{k>=m} Delta_k a S_{k-3} u`` (high-low part of the remainder)."""
    return _omega(a, u, m, 1)


def omega2(a: Field, u: Field, m: int) -> Field:
    """``sum_{k>=m} sum_{|j-k|<=2} Delta_k a Delta_j u`` (diagonal part)."""
    return _omega(a, u, m, 2)


# ---------------------------------------------------------------------------
# positivity
# ---------------------------------------------------------------------------

_TRIAL_DECAYS = (0.0, 0.5, 1.0, 2.0)


def trial_field(grid: PeriodicGrid, rng: np.random.Generator, trial: int) -> Field:
    """Random test field whose spectral decay cycles through several rates."""
    return random_field(grid, rng, decay=_TRIAL_DECAYS[trial % len(_TRIAL_DECAYS)])


def positivity_margin(a: Field, m: int, trials: int = 200, rng_seed: int = 0) -> float:
    """``min Re<T_a^m u, u> / ||u||^2`` over random ``u``."""
    rng = np.random.default_rng(rng_seed)
    worst = np.inf
    for i in range(trials):
        u = trial_field(a.grid, rng, i)
        tu = modified_paraproduct(a, u, m)
        worst = min(worst, float(np.mean(tu.values * u.values) / np.mean(u.values**2)))
    return worst


@dataclass(frozen=True)
class M0Result:
    found: bool
    m0: int | None
    margins: tuple

    def __bool__(self):
        return self.found


def find_m0(a: Field, kappa: float, trials: int = 200, rng_seed: int = 0) -> M0Result:
    """Smallest ``m`` whose positivity margin reaches ``kappa / 2``."""
    if np.min(a.values) < kappa:
        raise ValueError(f"coefficient drops below kappa={kappa}")
    margins = []
    for m in range(0, a.grid.k_max - 2):
        margin = positivity_margin(a, m, trials, rng_seed)
        margins.append(margin)
        if margin >= kappa / 2:
            return M0Result(True, m, tuple(margins))
    return M0Result(False, None, tuple(margins))


# ---------------------------------------------------------------------------
# adjoint defect and commutators
# ---------------------------------------------------------------------------

def adjoint_defect(a: Field, m: int, u: Field) -> float:
    """``||(T_a^m - (T_a^m)^*) d_x u||``."""
    du = derivative(u, 1)
    return l2_norm(modified_paraproduct(a, du, m) - paraproduct_adjoint(a, du, m))


def commutator(nu: int, a: Field, m: int, u: Field) -> Field:
    """``[Delta_nu, T_a^m] u = Delta_nu T_a^m u - T_a^m Delta_nu u``."""
    g = a.grid
    if not 0 <= nu <= g.k_max:
        raise ValueError(f"nu={nu} outside [0, {g.k_max}]")
    total = np.zeros(g.n_points, dtype=complex)
    for term in commutator_terms(nu, a, m, u).values():
        total += term
    return g.from_spectrum(total)


def commutator_terms(nu: int, a: Field, m: int, u: Field) -> dict:
    """Spectra of ``[Delta_nu, b_k] Q_k u`` for each paraproduct term, keyed by label."""
    _same_grid(a, u)
    cfg = _check_m(a.grid, m)
    dn = delta_symbol(a.grid, nu)
    out = {}
    for sa, su, label in cfg.terms():
        b = a.spectrum * sa
        outer = dn * band_product_spectrum(b, u.spectrum * su)
        inner = band_product_spectrum(b, u.spectrum * su * dn)
        out[label] = outer - inner
    return out


class DegenerateInputError(ValueError):
    """Raised when a normalizing quantity vanishes."""


def cm_commutator(nu: int, b: Field, w: Field) -> Field:
    """``[Delta_nu, b] d_x w``."""
    g = b.grid
    dw = derivative(w, 1)
    dn = delta_symbol(g, nu)
    outer = dn * band_product_spectrum(b.spectrum, dw.spectrum)
    inner = band_product_spectrum(b.spectrum, dw.spectrum * dn)
    return g.from_spectrum(outer - inner)


def cm_commutator_ratio(nu: int, b: Field, w: Field) -> float:
    """``||[Delta_nu, b] d_x w|| / (||d_x b||_inf ||w||)``."""
    _same_grid(b, w)
    db = linf_norm(derivative(b, 1))
    if db <= 1e-14 * max(1.0, linf_norm(b)):
        raise DegenerateInputError("coefficient has vanishing gradient")
    wn = l2_norm(w)
    if wn == 0.0:
        raise DegenerateInputError("w is zero")
    return l2_norm(cm_commutator(nu, b, w)) / (db * wn)


# ---------------------------------------------------------------------------
# weighted block sums used by the energy proof
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockSumTerms:
    """Both sides of a summed block inequality.

    ``lhs <= dt_energy / N + C * N * grad_energy`` (or ``C * grad_energy``
    for the inequalities without a time derivative).
    """

    lhs: float
    dt_energy: float
    grad_energy: float

    def rhs(self, constant: float, n_split: float | None = None) -> float:
        if n_split is None:
            return constant * self.grad_energy
        return self.dt_energy / n_split + constant * n_split * self.grad_energy

    def fitted_constant(self, n_split: float | None = None) -> float:
        """Smallest constant for which ``|lhs| <= rhs``.

        The absolute value makes the check independent of the sign of the
        pairing, which is stronger than the one-sided statement.
        """
        if self.grad_energy == 0.0:
            return 0.0
        mag = abs(self.lhs)
        excess = mag if n_split is None else mag - self.dt_energy / n_split
        scale = self.grad_energy if n_split is None else n_split * self.grad_energy
        return max(0.0, excess) / scale


def _weighted_blocks(w: Field, s: float, alpha: float, t: float):
    g = w.grid
    weights = 2.0 ** (-(s + alpha * t) * np.arange(g.k_max + 1))
    return weights, [delta_symbol(g, nu) for nu in range(g.k_max + 1)]


def auxp1_terms(a: Field, w: Field, w_t: Field, m: int, s: float, alpha: float,
                t: float) -> BlockSumTerms:
    """Remainder pairing against ``d_x d_t v_nu``.

    ``lhs = sum_nu 2^{-(s+alpha t) nu} <d_x d_t v_nu, Delta_nu((a - T_a^m) d_x w)>``
    with ``v_nu = 2^{-(s+alpha t) nu} Delta_nu w``, whence
    ``d_t v_nu = 2^{-(s+alpha t) nu} (Delta_nu w_t - alpha nu ln2 Delta_nu w)``.
    """
    g = w.grid
    rem = remainder(a, derivative(w, 1), m)
    weights, symbols = _weighted_blocks(w, s, alpha, t)
    xi = g.xi
    lhs = dt_energy = grad_energy = 0.0
    for nu, (wt, sym) in enumerate(zip(weights, symbols)):
        v = wt * sym * w.spectrum
        vt = wt * sym * (w_t.spectrum - alpha * nu * np.log(2.0) * w.spectrum)
        dx_vt = g.from_spectrum(1j * xi * vt)
        lhs += wt * float(np.mean(dx_vt.values * g.from_spectrum(sym * rem.spectrum).values))
        dt_energy += _coeff_norm2(vt)
        grad_energy += 4.0**nu * _coeff_norm2(v)
    return BlockSumTerms(lhs, dt_energy, grad_energy)


def auxp1_companion_terms(a: Field, w: Field, m: int, s: float, alpha: float,
                          t: float) -> BlockSumTerms:
    """``sum_nu 2^{-(s+alpha t) nu} nu <d_x v_nu, Delta_nu((a - T_a^m) d_x w)>``."""
    g = w.grid
    rem = remainder(a, derivative(w, 1), m)
    weights, symbols = _weighted_blocks(w, s, alpha, t)
    lhs = grad_energy = 0.0
    for nu, (wt, sym) in enumerate(zip(weights, symbols)):
        v = wt * sym * w.spectrum
        dx_v = g.from_spectrum(1j * g.xi * v)
        lhs += wt * nu * float(np.mean(dx_v.values * g.from_spectrum(sym * rem.spectrum).values))
        grad_energy += 4.0**nu * _coeff_norm2(v)
    return BlockSumTerms(lhs, 0.0, grad_energy)


def auxp1_check(a: Field, w: Field, w_t: Field, m: int, s: float, alpha: float, t: float,
                n_split: float, constant: float) -> tuple[float, float]:
    """``(lhs, rhs)`` of the remainder pairing inequality for a given constant."""
    terms = auxp1_terms(a, w, w_t, m, s, alpha, t)
    return terms.lhs, terms.rhs(constant, n_split)


def commutator_sum_terms(a: Field, w: Field, m: int, s: float, alpha: float,
                         t: float) -> BlockSumTerms:
    """``sum_nu 2^{-2(s+alpha t) nu} ||d_x [Delta_nu, T_a^m] d_x w||^2`` against
    ``||a||_Lip^2 sum_nu 2^{2 nu} ||v_nu||^2``."""
    g = w.grid
    dw = derivative(w, 1)
    weights, symbols = _weighted_blocks(w, s, alpha, t)
    lip2 = lip_norm(a) ** 2
    lhs = grad_energy = 0.0
    for nu, (wt, sym) in enumerate(zip(weights, symbols)):
        c = commutator(nu, a, m, dw)
        lhs += wt**2 * _coeff_norm2(1j * g.xi * c.spectrum)
        grad_energy += 4.0**nu * _coeff_norm2(wt * sym * w.spectrum)
    return BlockSumTerms(lhs, 0.0, lip2 * grad_energy)


def commutator_pairing_terms(a: Field, w: Field, w_t: Field | None, m: int, s: float,
                             alpha: float, t: float) -> BlockSumTerms:
    """Commutator paired with ``d_t d_x v_nu`` (or ``nu d_x v_nu`` when ``w_t`` is None).

    The gradient side carries the factor ``||a||_Lip``.
    """
    g = w.grid
    dw = derivative(w, 1)
    weights, symbols = _weighted_blocks(w, s, alpha, t)
    lip = lip_norm(a)
    lhs = dt_energy = grad_energy = 0.0
    for nu, (wt, sym) in enumerate(zip(weights, symbols)):
        v = wt * sym * w.spectrum
        c = commutator(nu, a, m, dw)
        if w_t is None:
            probe = nu * v
        else:
            probe = wt * sym * (w_t.spectrum - alpha * nu * np.log(2.0) * w.spectrum)
            dt_energy += _coeff_norm2(probe)
        dx_probe = g.from_spectrum(1j * g.xi * probe)
        lhs += wt**2 * float(np.mean(dx_probe.values * c.values))
        grad_energy += 4.0**nu * _coeff_norm2(v)
    return BlockSumTerms(lhs, dt_energy, lip * grad_energy)


def _coeff_norm2(coeffs: np.ndarray) -> float:
    n = coeffs.shape[-1]
    return float(np.sum(np.abs(coeffs) ** 2) / n**2)


def cm_operator_norm(nu: int, b: Field, iterations: int = 300, rng_seed: int = 0) -> float:
    """Operator norm of ``w -> [Delta_nu, b] d_x w`` divided by ``||d_x b||_inf``.

    Power iteration on ``A^T A`` using the transpose
    ``A^T = -d_x b Delta_nu + Delta_nu d_x b`` (products projected).
    """
    g = b.grid
    db = linf_norm(derivative(b, 1))
    if db <= 1e-14 * max(1.0, linf_norm(b)):
        raise DegenerateInputError("coefficient has vanishing gradient")
    dn = delta_symbol(g, nu)
    ik = 1j * g.xi
    ik[g.nyquist_index] = 0.0
    bs = b.spectrum

    def forward(ws):
        dw = ik * ws
        return dn * band_product_spectrum(bs, dw) - band_product_spectrum(bs, dn * dw)

    def transpose(cs):
        return -ik * band_product_spectrum(bs, dn * cs) + ik * dn * band_product_spectrum(bs, cs)

    rng = np.random.default_rng(rng_seed)
    x = np.fft.fft(rng.standard_normal(g.n_points))
    x[g.nyquist_index] = 0.0
    estimate = 0.0
    for _ in range(iterations):
        x = x / np.sqrt(np.sum(np.abs(x) ** 2))
        y = transpose(forward(x))
        estimate = float(np.sqrt(np.sum(np.abs(y) ** 2)))
        x = y
        if estimate == 0.0:
            break
    return float(np.sqrt(estimate)) / db
