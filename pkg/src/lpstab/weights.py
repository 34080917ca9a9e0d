"""Weight functions for the Log-Lipschitz energy estimate.

``mu(x) = x (1 + |log x|)`` is the modulus of continuity,
``theta(tau) = log(1 + log tau)`` its Osgood integral and
``psi(y) = theta^{-1}(-lambda log y) = exp(y^-lambda - 1)``.  The weight
``Phi(y) = -int_y^1 psi`` has no closed form and is integrated numerically;
``Phi' = psi`` and ``Phi'' = -lambda y^(-lambda-1) psi`` are analytic.

``psi`` grows like a double exponential as ``y -> 0``.  Plain evaluations
reject arguments whose result would overflow; every quantity that the
energy harness needs is also available in logarithmic form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

LOG_MAX_FLOAT = math.log(np.finfo(float).max)  # about 709.78
PHI_RTOL = 1e-13


class WeightOverflowError(OverflowError):
    """Raised when a weight value is not representable as a float."""


class DataTooLargeError(ValueError):
    """Raised when the data norm exceeds the smallness threshold."""


# ---------------------------------------------------------------------------
# elementary functions
# ---------------------------------------------------------------------------

def modulus_mu(x: float) -> float:
    if not x > 0:
        raise ValueError(f"mu requires x > 0, got {x}")
    return x * (1.0 + abs(math.log(x)))


def theta(tau_arg: float) -> float:
    if not tau_arg >= 1:
        raise ValueError(f"theta requires an argument >= 1, got {tau_arg}")
    return math.log1p(math.log(tau_arg))


def theta_inv(y: float) -> float:
    if not y >= 0:
        raise ValueError(f"theta_inv requires y >= 0, got {y}")
    exponent = math.expm1(y)
    if exponent > LOG_MAX_FLOAT:
        raise WeightOverflowError(f"theta_inv({y}) overflows")
    return math.exp(exponent)


def _check_y(y: float):
    if not 0 < y <= 1:
        raise ValueError(f"y must lie in (0, 1], got {y}")


def _check_lambda(lam: float, strict: bool = False):
    if not lam > 0 or (strict and not lam > 1):
        raise ValueError(f"invalid lambda {lam}")


def log_psi(lam: float, y: float) -> float:
    """``log psi_lambda(y) = y^-lambda - 1`` (never overflows for y in (0, 1])."""
    _check_lambda(lam)
    _check_y(y)
    return y ** (-lam) - 1.0


def psi_overflow_threshold(lam: float) -> float:
    """Smallest ``y`` with representable ``psi_lambda(y)``: ``y^-lambda <= log(MAX) + 1``."""
    return (LOG_MAX_FLOAT + 1.0) ** (-1.0 / lam)


def psi(lam: float, y: float) -> float:
    lp = log_psi(lam, y)
    if lp > LOG_MAX_FLOAT:
        raise WeightOverflowError(
            f"psi_{lam}({y}) = exp({lp:.6g}) exceeds the float range; "
            f"need y >= {psi_overflow_threshold(lam):.6g}"
        )
    return math.exp(lp)


# ---------------------------------------------------------------------------
# Phi and its derivatives
# ---------------------------------------------------------------------------

@lru_cache(maxsize=65536)
def _scaled_tail(lam: float, y: float) -> float:
    """``int_y^1 exp(z^-lambda - y^-lambda) dz``; the integrand is at most one."""
    if y == 1.0:
        return 0.0
    top = y ** (-lam)

    def integrand(d):
        # z^-lambda - y^-lambda at z = y + d without cancellation
        return math.exp(top * math.expm1(-lam * math.log1p(d / y)))

    # the integrand decays on a layer of width ~ y^(lambda+1)/lambda near y
    layer = min(1.0 - y, 40.0 * y ** (lam + 1) / lam)
    edges = [k * layer / 8 for k in range(9)] + [1.0 - y]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        # past the layer the integrand is below e^-40, so only an absolute
        # tolerance relative to the accumulated layer mass is meaningful
        absolute = PHI_RTOL * total if lo >= layer else 0.0
        val, _ = integrate.quad(integrand, lo, hi, epsabs=absolute, epsrel=PHI_RTOL, limit=200)
        total += val
    return total


def log_neg_phi(lam: float, y: float) -> float:
    """``log(-Phi_lambda(y))`` for ``y < 1``; ``-inf`` at ``y = 1``."""
    _check_lambda(lam)
    _check_y(y)
    tail = _scaled_tail(float(lam), float(y))
    if tail == 0.0:
        return -math.inf
    return log_psi(lam, y) + math.log(tail)


def phi(lam: float, y: float) -> float:
    """``Phi_lambda(y) = -int_y^1 psi_lambda``."""
    lnp = log_neg_phi(lam, y)
    if lnp == -math.inf:
        return 0.0
    if lnp > LOG_MAX_FLOAT:
        raise WeightOverflowError(f"Phi_{lam}({y}) overflows")
    return -math.exp(lnp)


def phi_prime(lam: float, y: float) -> float:
    return psi(lam, y)


def phi_second(lam: float, y: float) -> float:
    return -lam * y ** (-lam - 1.0) * psi(lam, y)


def ode_residual(lam: float, y: float) -> float:
    """``y Phi'' + lambda Phi' (1 + |log(1/Phi')|)`` at a representable point."""
    d1 = phi_prime(lam, y)
    return y * phi_second(lam, y) + lam * d1 * (1.0 + abs(math.log(1.0 / d1)))


def ode_relative_residual(lam: float, y: float) -> float:
    """ODE residual divided by ``|y Phi''|``, evaluated with ``psi`` factored out.

    Both terms carry the common factor ``psi``; dividing it out keeps the
    check meaningful where ``psi`` itself overflows.
    """
    lhs = -lam * y ** (-lam)  # y Phi'' / psi
    rhs = lam * (1.0 + abs(-log_psi(lam, y)))  # lambda (1 + |log(1/psi)|)
    return abs(lhs + rhs) / abs(lhs)


def scaling_residual(lam: float, zeta: float, y: float) -> float:
    """Relative gap in ``psi(zeta y) = exp(zeta^-lambda - 1) psi(y)^(zeta^-lambda)``.

    Evaluated in logarithms so that large ``psi(y)`` does not overflow.
    """
    if not zeta > 1:
        raise ValueError(f"zeta must exceed 1, got {zeta}")
    if not 0 < y <= 1.0 / zeta:
        raise ValueError(f"y must lie in (0, 1/zeta], got {y}")
    zl = zeta ** (-lam)
    log_lhs = log_psi(lam, zeta * y)
    log_rhs = (zl - 1.0) + zl * log_psi(lam, y)
    return abs(math.expm1(log_rhs - log_lhs))


def scaling_sides(lam: float, zeta: float, y: float) -> tuple[float, float]:
    """Both sides of the scaling identity in log form (for reporting)."""
    zl = zeta ** (-lam)
    return log_psi(lam, zeta * y), (zl - 1.0) + zl * log_psi(lam, y)


# ---------------------------------------------------------------------------
# Lambda and the choice of beta
# ---------------------------------------------------------------------------

def lambda_fn(lam: float, y: float) -> float:
    """``Lambda_lambda(y) = y Phi_lambda(1/y)`` for ``y >= 1``."""
    if not y >= 1:
        raise ValueError(f"Lambda requires y >= 1, got {y}")
    return y * phi(lam, 1.0 / y)


def log_neg_lambda(lam: float, y: float) -> float:
    """``log(-Lambda_lambda(y))``; ``-inf`` at ``y = 1``."""
    if not y >= 1:
        raise ValueError(f"Lambda requires y >= 1, got {y}")
    return math.log(y) + log_neg_phi(lam, 1.0 / y)


def lambda_inv(lam: float, z: float, rtol: float = 1e-15, max_iter: int = 400) -> float:
    """Inverse of ``Lambda_lambda`` on ``(-inf, 0]`` by bracketed bisection.

    The bracket starts at ``[1, 2]`` and its upper end doubles until it
    contains the root.  Comparisons are made on ``log(-Lambda)`` so the
    search never overflows.
    """
    if z > 0:
        raise ValueError(f"Lambda takes values in (-inf, 0]; got z={z}")
    if z == 0:
        return 1.0
    target = math.log(-z)
    lo, hi = 1.0, 2.0
    while log_neg_lambda(lam, hi) < target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise WeightOverflowError(f"no bracket found for Lambda^-1({z})")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= rtol * mid:
            break
        if log_neg_lambda(lam, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def psi_growth_probe(lam: float, zs) -> np.ndarray:
    """``log( -(1/z) psi(1 / Lambda^-1(z)) )`` for each ``z``; should increase as ``z -> -inf``."""
    out = []
    for z in zs:
        y = lambda_inv(lam, z)
        out.append(log_psi(lam, 1.0 / y) - math.log(-z))
    return np.array(out)


@dataclass(frozen=True)
class WeightParams:
    """Parameters of the weighted energy estimate.

    ``sigma = (1 - s) / alpha`` and ``tau = sigma / 4`` are derived.  ``beta``
    defaults to its smallest admissible value ``sigma + tau``.
    """

    s: float
    lam: float
    alpha: float
    gamma: float
    beta: float | None = None
    sigma: float = field(init=False)
    tau: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not self.lam > 1:
            raise ValueError(f"lambda must exceed 1, got {self.lam}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        sigma = (1.0 - self.s) / self.alpha
        tau = sigma / 4.0
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "tau", tau)
        beta = sigma + tau if self.beta is None else float(self.beta)
        if beta < sigma + tau * (1 - 1e-12):
            raise ValueError(f"beta={beta} below sigma + tau = {sigma + tau}")
        object.__setattr__(self, "beta", beta)

    @classmethod
    def from_horizon(cls, s, lam, alpha1, horizon, gamma, beta=None) -> "WeightParams":
        """Use ``alpha = max(alpha1, 1/T)``."""
        return cls(s=s, lam=lam, alpha=max(alpha1, 1.0 / horizon), gamma=gamma, beta=beta)

    def with_beta(self, beta: float) -> "WeightParams":
        return WeightParams(self.s, self.lam, self.alpha, self.gamma, beta)

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k))
                for k in ("s", "lam", "alpha", "gamma", "beta", "sigma", "tau")}


def log_data_threshold(params: WeightParams) -> float:
    """``log rho_bar = tau Lambda(1 + sigma/tau)``; ``beta >= sigma + tau`` iff ``log rho <= this``."""
    y = 1.0 + params.sigma / params.tau
    return -params.tau * math.exp(log_neg_lambda(params.lam, y))


def data_threshold(params: WeightParams) -> float:
    """The smallness threshold itself (often far below the smallest positive float)."""
    return math.exp(log_data_threshold(params))


def solve_beta(params: WeightParams, data_hnorm: float) -> float:
    """Solve ``exp(-beta Phi(tau/beta)) = 1/rho`` for ``beta`` without the floor check."""
    if not 0 < data_hnorm < 1:
        raise ValueError(f"data norm must lie in (0, 1), got {data_hnorm}")
    return params.tau * lambda_inv(params.lam, math.log(data_hnorm) / params.tau)


def beta_equation_residual(params: WeightParams, beta: float, data_hnorm: float) -> float:
    """Relative residual of ``-beta Phi(tau/beta) = -log rho``."""
    lhs = beta * phi(params.lam, params.tau / beta)
    target = math.log(data_hnorm)
    return abs(lhs - target) / abs(target)


def choose_beta(params: WeightParams, data_hnorm: float) -> float:
    """``beta = tau Lambda^-1(log(rho)/tau)``, required to be at least ``sigma + tau``."""
    beta = solve_beta(params, data_hnorm)
    if beta < params.sigma + params.tau:
        raise DataTooLargeError(
            f"data norm {data_hnorm:.3g} gives beta={beta:.6g} < sigma+tau="
            f"{params.sigma + params.tau:.6g}; the smallness threshold is "
            f"exp({log_data_threshold(params):.6g})"
        )
    return beta
