import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from lpstab.weights import (
    LOG_MAX_FLOAT, DataTooLargeError, WeightOverflowError, WeightParams, beta_equation_residual,
    choose_beta, lambda_fn, lambda_inv, log_data_threshold, log_neg_phi, log_psi, modulus_mu,
    ode_relative_residual, ode_residual, phi, phi_prime, phi_second, psi, psi_growth_probe,
    psi_overflow_threshold, scaling_residual, scaling_sides, solve_beta, theta, theta_inv,
)

mp.mp.dps = 30


def mp_log_neg_phi(lam, y):
    """Independent high-precision value of log(-Phi(y))."""
    lam, y = mp.mpf(lam), mp.mpf(y)
    top = y ** (-lam)
    layer = min(mp.mpf(1), y + 40 * y ** (lam + 1) / lam)
    tail = mp.quad(lambda z: mp.exp(z ** (-lam) - top), [y, (y + layer) / 2, layer, 1])
    return float(top - 1 + mp.log(tail))


@pytest.mark.parametrize("x,expected", [(1.0, 1.0), (math.e, 2 * math.e), (1 / math.e, 2 / math.e)])
def test_modulus_values(x, expected):
    assert modulus_mu(x) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_modulus_domain(x):
    with pytest.raises(ValueError):
        modulus_mu(x)


@given(st.floats(0, 6))
def test_theta_roundtrip(y):
    assert theta(theta_inv(y)) == pytest.approx(y, rel=1e-12, abs=1e-14)


def test_theta_domain():
    with pytest.raises(ValueError):
        theta(0.5)
    with pytest.raises(ValueError):
        theta_inv(-0.1)
    with pytest.raises(WeightOverflowError):
        theta_inv(7.0)


@pytest.mark.parametrize("lam", [1.5, 2.0, 3.0])
def test_psi_is_theta_inverse_of_log(lam):
    # psi(y) = theta^-1(-lambda log y)
    for y in (0.3, 0.5, 0.9):
        assert psi(lam, y) == pytest.approx(theta_inv(-lam * math.log(y)), rel=1e-13)
    assert psi(lam, 1.0) == 1.0


@pytest.mark.parametrize("lam", [1.5, 2.0, 5.0])
def test_overflow_threshold(lam):
    y0 = psi_overflow_threshold(lam)
    assert math.isfinite(psi(lam, y0 * (1 + 1e-9)))
    with pytest.raises(WeightOverflowError):
        psi(lam, y0 * (1 - 1e-6))
    # the log form stays available below the threshold
    assert log_psi(lam, y0 / 2) > LOG_MAX_FLOAT


@pytest.mark.parametrize("y", [0.0, -0.5, 1.5])
def test_psi_domain(y):
    with pytest.raises(ValueError):
        psi(2.0, y)


@pytest.mark.parametrize("lam", [1.5, 2.0, 3.0, 5.0])
@pytest.mark.parametrize("y", [0.05, 0.3, 0.6, 0.9, 0.99])
def test_phi_against_mpmath(lam, y):
    ours = log_neg_phi(lam, y)
    assert abs(math.expm1(ours - mp_log_neg_phi(lam, y))) <= 1e-8


def test_phi_at_one():
    assert phi(2.0, 1.0) == 0.0
    assert log_neg_phi(2.0, 1.0) == -math.inf


@pytest.mark.parametrize("lam", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("y", [0.4, 0.7, 0.9])
def test_phi_derivatives_finite_difference(lam, y):
    # five-point stencil with a step matched to the width y^(lambda+1)/lambda of psi's layer
    h = 1e-3 * y ** (lam + 1) / lam

    def d5(f):
        return (-f(y + 2 * h) + 8 * f(y + h) - 8 * f(y - h) + f(y - 2 * h)) / (12 * h)

    assert d5(lambda v: phi(lam, v)) == pytest.approx(phi_prime(lam, y), rel=1e-8)
    assert d5(lambda v: phi_prime(lam, v)) == pytest.approx(phi_second(lam, y), rel=1e-8)


@pytest.mark.parametrize("lam", [1.5, 2.0, 3.0, 5.0])
def test_ode_identity(lam):
    for y in np.linspace(0.05, 0.95, 19):
        assert ode_relative_residual(lam, float(y)) <= 1e-12
        if log_psi(lam, float(y)) < LOG_MAX_FLOAT - 10:
            scale = abs(float(y) * phi_second(lam, float(y)))
            assert abs(ode_residual(lam, float(y))) <= 1e-12 * scale


@given(st.sampled_from([1.0, 1.5, 2.0, 3.0]), st.floats(1.1, 4.0), st.floats(0.3, 1.0))
def test_scaling_identity(lam, zeta, frac):
    y = max(0.01, psi_overflow_threshold(lam)) + frac * (1 / zeta - max(0.01, psi_overflow_threshold(lam)))
    if y > 1 / zeta or y <= 0:
        return
    assert scaling_residual(lam, zeta, y) <= 1e-12


@pytest.mark.parametrize("lam,zeta,y", [(2.0, 2.0, 0.4), (1.5, 1.5, 0.5), (3.0, 4.0, 0.2)])
def test_scaling_identity_direct_values(lam, zeta, y):
    # independent side: plain exponentials at representable points
    left = math.exp((zeta * y) ** (-lam) - 1)
    right = math.exp(zeta ** (-lam) - 1) * math.exp(y ** (-lam) - 1) ** (zeta ** (-lam))
    assert left == pytest.approx(right, rel=1e-12)
    a, b = scaling_sides(lam, zeta, y)
    assert a == pytest.approx(b, rel=1e-13)


def test_scaling_domain():
    with pytest.raises(ValueError):
        scaling_residual(2.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        scaling_residual(2.0, 2.0, 0.6)


@pytest.mark.parametrize("lam", [1.5, 2.0, 3.0])
def test_phi_concave(lam):
    ys = np.linspace(0.2, 0.95, 40)
    vals = np.array([phi(lam, float(y)) for y in ys])
    assert np.all(np.diff(vals, 2) <= 1e-12)


@pytest.mark.parametrize("z", [-1e-3, -0.1, -1.0, -10.0, -1e3])
def test_lambda_roundtrip(z):
    y = lambda_inv(2.0, z)
    assert lambda_fn(2.0, y) == pytest.approx(z, rel=1e-10)


def test_lambda_domain():
    with pytest.raises(ValueError):
        lambda_inv(2.0, 0.5)
    with pytest.raises(ValueError):
        lambda_fn(2.0, 0.5)
    assert lambda_inv(2.0, 0.0) == 1.0


def test_psi_growth_probe_increases():
    probe = psi_growth_probe(2.0, [-(10.0**k) for k in range(5)])
    assert np.all(np.diff(probe) > 0)


def test_weight_params_derived_fields():
    p = WeightParams(s=0.5, lam=2.0, alpha=1.0, gamma=1.0)
    assert p.sigma == (1 - 0.5) / 1.0 and p.tau == p.sigma / 4
    assert p.beta == p.sigma + p.tau
    q = WeightParams.from_horizon(0.3, 2.0, 0.5, 1.0, 1.0)
    assert q.alpha == 1.0 and q.sigma == pytest.approx(0.7)


@pytest.mark.parametrize("kw", [dict(s=0.0), dict(s=1.0), dict(lam=1.0), dict(alpha=0.0),
                                dict(gamma=-1.0), dict(beta=0.1)])
def test_weight_params_rejected(kw):
    base = dict(s=0.5, lam=2.0, alpha=1.0, gamma=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        WeightParams(**base)


@pytest.mark.parametrize("rho", [1e-3, 1e-6, 1e-12])
def test_beta_equation(rho):
    p = WeightParams(s=0.5, lam=2.0, alpha=1.0, gamma=1.0)
    beta = solve_beta(p, rho)
    assert beta_equation_residual(p, beta, rho) <= 1e-8


def test_beta_grows_as_data_shrinks():
    p = WeightParams(s=0.5, lam=2.0, alpha=1.0, gamma=1.0)
    betas = [solve_beta(p, r) for r in (1e-2, 1e-4, 1e-8, 1e-16)]
    assert np.all(np.diff(betas) > 0)


@pytest.mark.parametrize("rho", [0.9, 1e-12])
def test_data_too_large(rho):
    p = WeightParams(s=0.5, lam=2.0, alpha=1.0, gamma=1.0)
    # the threshold sits near exp(-7e7) for these parameters
    assert log_data_threshold(p) < -1e6
    with pytest.raises(DataTooLargeError):
        choose_beta(p, rho)


@pytest.mark.parametrize("lam", [1.0, 1.5, 2.0, 3.0])
@pytest.mark.parametrize("zeta", [1.5, 2.0, 4.0])
def test_scaling_identity_at_boundary(lam, zeta):
    # at y = 1/zeta the left side is psi(1) = 1, and the right side is 1 as well
    assert scaling_residual(lam, zeta, 1.0 / zeta) <= 1e-12
    log_left, log_right = scaling_sides(lam, zeta, 1.0 / zeta)
    assert log_left == 0.0 and abs(log_right) <= 1e-15
