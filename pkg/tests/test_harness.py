import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from lpstab.calibration import calibrate
from lpstab.coefficients import builtin_family
from lpstab.grid import PeriodicGrid, random_field, single_mode
from lpstab.harness import (
    DIAGNOSTIC_NAMES, CurveFit, ScanConfig, backward_operator_residual, comparison_table,
    energy_inequality_check, fit_stability_curve, graded_gauss_rule, log_energy_weight,
    loss_index, negative_control_scan, proof_diagnostics, stability_scan, transform_residual,
    transformed_state, worst_case_modulus,
)
from lpstab.paraproduct import auxp1_terms, commutator_pairing_terms
from lpstab.solver import SolverConfig, Trajectory, manufacture_backward
from lpstab.weights import WeightParams, log_psi, phi, psi

PARAMS = WeightParams(s=0.5, lam=2.0, alpha=1.0, gamma=1.0)


def test_loss_index():
    assert loss_index(PARAMS, 0.0) == 0.5
    assert loss_index(PARAMS, 0.25) == pytest.approx(0.25)


def test_log_weight_matches_direct_evaluation():
    # a mild exponent keeps the weight representable, so phi can be used directly
    p = WeightParams(s=0.5, lam=1.1, alpha=1.0, gamma=1.0)
    for t in (0.0, 0.1, 0.4):
        direct = math.exp(2 * p.gamma * t) * math.exp(-2 * p.beta * phi(p.lam, (t + p.tau) / p.beta))
        assert log_energy_weight(p, t)[0] == pytest.approx(math.log(direct), rel=1e-10)


def test_log_weight_derivative_is_gamma_minus_psi():
    for t in (0.05, 0.2, 0.4):
        h = 1e-7
        fd = (log_energy_weight(PARAMS, t + h)[0] - log_energy_weight(PARAMS, t - h)[0]) / (4 * h)
        expected = PARAMS.gamma - psi(PARAMS.lam, (t + PARAMS.tau) / PARAMS.beta)
        assert fd == pytest.approx(expected, rel=1e-5)


@pytest.mark.parametrize("p", [0.01, 0.2, 0.4375])
def test_graded_rule_integrates_layer(p):
    nodes, w = graded_gauss_rule(PARAMS, p)
    rate = 2 * psi(PARAMS.lam, PARAMS.tau / PARAMS.beta)
    exact = (1 - math.exp(-rate * p)) / rate
    assert np.sum(w * np.exp(-rate * nodes)) == pytest.approx(exact, rel=1e-10)
    assert np.sum(w * nodes**3) == pytest.approx(p**4 / 4, rel=1e-12)
    assert np.all((nodes > 0) & (nodes < p))
    assert graded_gauss_rule(PARAMS, 0.0)[0].size == 0


def _constant_mode_trajectory(n_times=113):
    g = PeriodicGrid(64)
    ts = np.linspace(0, 7 * PARAMS.sigma / 8, n_times)
    u = single_mode(g, 8).values
    return Trajectory(g, ts, np.tile(u, (n_times, 1)), "backward")


def test_energy_lhs_against_quad():
    # cos(8x) sits in block 3 alone, so ||u||^2 at index r is 4^(3r) / 2
    tr = _constant_mode_trajectory()
    p = tr.times[64]
    rep = energy_inequality_check(tr, PARAMS, p)

    def log_integrand(t):
        return log_energy_weight(PARAMS, t)[0] + 3 * loss_index(PARAMS, t) * math.log(4) - math.log(2)

    top = log_integrand(0.0)
    layer = 0.5 / psi(PARAMS.lam, PARAMS.tau / PARAMS.beta)
    # past a few hundred layer widths the integrand is below exp(-400); inside
    # the layer, rounding of t + tau limits the integrand to about 1e-7 relative
    end = min(p, 400 * layer)
    val, _ = integrate.quad(lambda t: math.exp(log_integrand(t) - top), 0, end,
                            points=[layer * k for k in (1, 4, 16, 64) if layer * k < end],
                            epsabs=0, epsrel=1e-7, limit=500)
    assert rep.log_lhs == pytest.approx(top + math.log(val), abs=1e-6)
    assert rep.rule == "graded_gauss" and rep.n_nodes > 0
    # fitted_M is exactly the ratio to the right-hand side
    assert rep.lhs <= rep.fitted_M * sum(rep.rhs_terms) * (1 + 1e-12) or math.isinf(rep.lhs)
    assert rep.log10_M == pytest.approx(math.log10(rep.fitted_M))


def test_energy_zero_trajectory():
    g = PeriodicGrid(32)
    ts = np.linspace(0, 0.5, 9)
    tr = Trajectory(g, ts, np.zeros((9, 32)), "backward")
    for rule in ("graded_gauss", "trapezoid"):
        rep = energy_inequality_check(tr, PARAMS, ts[4], rule=rule)
        assert rep.fitted_M == 0.0 and rep.lhs == 0.0
        assert all(v >= 0 for v in rep.rhs_terms)


def test_energy_preconditions():
    tr = _constant_mode_trajectory()
    with pytest.raises(ValueError):
        energy_inequality_check(tr, PARAMS, 0.9)
    with pytest.raises(ValueError):
        energy_inequality_check(tr, PARAMS, tr.times[3] + 1e-4)
    with pytest.raises(ValueError):
        energy_inequality_check(tr, PARAMS, tr.times[3], rule="simpson")


def test_energy_report_frozen_protocol(rng):
    a = builtin_family("lip_x")
    g = PeriodicGrid(64)
    reports = []
    for seed in range(3):
        final = random_field(g, np.random.default_rng(seed), decay=1.0)
        tr = manufacture_backward(a, final, 1.0, SolverConfig(g, 1 / 128, 1.0))
        reports.append(energy_inequality_check(tr, PARAMS, tr.times[28]))
    frozen = calibrate("M", [r.fitted_M for r in reports[:2]])
    assert all(r.passed(frozen) for r in reports[:2])
    d = reports[2].as_dict()
    assert set(d) >= {"p", "log_lhs", "log_rhs_terms", "fitted_M", "params", "rule", "n_nodes"}


@given(st.floats(0.3, 1.6), st.floats(0.2, 3.0), st.floats(-1.0, 1.0))
def test_fit_recovers_synthetic_curve(delta, N, logM):
    rhos = 10.0 ** np.linspace(-1, -6, 11)
    sups = np.exp(logM - N * np.abs(np.log(rhos)) ** delta)
    fit = fit_stability_curve(rhos, sups)
    assert fit is not None
    assert fit.params[2] == pytest.approx(delta, rel=1e-4, abs=1e-4)
    assert fit.r2 > 0.999999


def test_fit_needs_four_points():
    assert fit_stability_curve([0.1, 0.01, 0.001], [1.0, 0.5, 0.2]) is None
    assert fit_stability_curve([0.1, 0.01, 0.001, 2.0, 0.0], [1, 0.5, 0.2, 0.1, 0.1]) is None


@pytest.mark.parametrize("delta,se,expected", [(0.8, 0.05, True), (0.95, 0.05, False),
                                               (1.0 - 2e-16, 0.0, False), (0.5, np.inf, False)])
def test_delta_below_one_margin(delta, se, expected):
    assert CurveFit((1.0, 1.0, delta), 0.99, se).delta_below_one() is expected


def _sphere_directions(n_polar=1200, n_azimuth=2400):
    th = np.linspace(0, np.pi, n_polar)[:, None]
    ph = np.linspace(0, 2 * np.pi, n_azimuth, endpoint=False)[None, :]
    d = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th) + 0 * ph])
    return d.reshape(3, -1), np.pi / n_polar


def test_worst_case_modulus_brute_force(rng):
    # along a unit direction d the best admissible multiple reaches
    # P(d) * min(1, rho^2 / Q(d)), so a dense direction grid bounds the value from below
    d, spacing = _sphere_directions()
    m = rng.standard_normal((3, 3))
    P = m @ m.T
    m = rng.standard_normal((3, 3))
    Q = m @ m.T + 0.05 * np.eye(3)
    pd = np.einsum("ik,ij,jk->k", d, P, d)
    qd = np.einsum("ik,ij,jk->k", d, Q, d)
    q_min = np.linalg.eigvalsh(Q)[0]
    for rho in np.sqrt(np.concatenate([[0.01 * q_min, 0.5 * q_min],
                                       np.linspace(1.01 * q_min, qd.max(), 4)])):
        ref = math.sqrt(np.max(pd * np.minimum(1.0, rho**2 / qd)))
        val, vec, mu = worst_case_modulus(P, Q, rho)
        assert ref <= val * (1 + 1e-9)
        assert val - ref <= 20 * np.linalg.norm(P, 2) * spacing / ref
        assert vec @ vec <= 1 + 1e-12 and vec @ Q @ vec <= rho**2 * (1 + 1e-9) and mu >= 0
        # the returned vector attains the value up to the multiplier resolution
        assert math.sqrt(vec @ P @ vec) == pytest.approx(val, rel=1e-5)


@given(st.floats(1e-8, 1e-3))
def test_worst_case_modulus_linear_regime(rho):
    # below the smallest value of Q on the unit sphere the optimum is a scaled
    # top generalized eigenvector, so the value is rho * sqrt(max P/Q)
    P = np.diag([3.0, 1.0, 0.5])
    Q = np.diag([0.1, 2.0, 1.0])
    val, vec, _ = worst_case_modulus(P, Q, rho)
    assert val == pytest.approx(rho * math.sqrt(30.0), rel=1e-9)


def _tiny_scan_config():
    return ScanConfig(PeriodicGrid(32), n_steps=56)


def test_scan_validation():
    a = builtin_family("constant")
    cfg = _tiny_scan_config()
    with pytest.raises(ValueError):
        stability_scan(a, None, [0.1, 0.2, 0.01, 0.001], 0.5, cfg)
    with pytest.raises(ValueError):
        stability_scan(a, None, [2.0, 0.1, 0.01, 0.001], 0.5, cfg)
    with pytest.raises(ValueError):
        stability_scan(a, None, [0.1, 0.01, 0.001, 1e-4], 0.5, cfg, mode="other")
    with pytest.raises(ValueError):
        stability_scan(a, None, [0.1, 0.01, 0.001, 1e-4], 0.5, cfg, mode="scaled_datum")
    res = stability_scan(a, None, [0.1, 0.01, 0.001], 0.5, cfg)
    assert res.verdict == "INSUFFICIENT-DATA" and res.fitted is None


def test_worst_case_scan_structure():
    a = builtin_family("loglip_t", {"t0": 0.2})
    scales = list(10.0 ** np.linspace(-1, -4, 7))
    res = stability_scan(a, None, scales, 0.5, _tiny_scan_config())
    assert res.verdict in ("PASS", "FAIL")
    assert res.monotone
    rhos = [r for r, _ in res.scale_points]
    assert rhos == scales
    assert all(np.diff([w for _, w in res.scale_points]) <= 0)
    d = res.as_dict()
    assert set(d["fitted"]) == {"M", "N", "delta"} and len(d["per_point"]) == 7
    rows = res.plot_rows()
    assert rows[0][2] == pytest.approx(res.fit_value(scales[0]))
    table = comparison_table({"x": res})
    assert table[0][0] == "x" and table[0][1] == res.delta


def test_scaled_datum_scan_is_linear():
    a = builtin_family("lip_x")
    g = PeriodicGrid(32)
    datum = g.sample(lambda x: np.exp(np.cos(x)) - 1.0)
    scales = [1.0, 0.1, 0.01, 0.001]
    res = stability_scan(a, datum, scales, 0.5, _tiny_scan_config(), "scaled_datum")
    rho = np.array([r for r, _ in res.scale_points])
    sup = np.array([w for _, w in res.scale_points])
    # the backward map is linear, so every point is a multiple of the first
    assert np.allclose(rho / rho[0], scales, rtol=1e-10)
    assert np.allclose(sup / sup[0], scales, rtol=1e-10)


def test_negative_control_is_report_only():
    scales = list(10.0 ** np.linspace(-1, -3, 5))
    res = negative_control_scan(builtin_family("oscillatory_control"), None, scales, 0.5,
                                _tiny_scan_config())
    assert res.verdict == "REPORT-ONLY"
    with pytest.raises(ValueError):
        negative_control_scan(builtin_family("constant"), None, scales, 0.5, _tiny_scan_config())


def test_subspace_restriction_matches_full_space():
    a = builtin_family("loglip_t", {"t0": 0.2})
    scales = list(10.0 ** np.linspace(-1, -3, 5))
    cut = stability_scan(a, None, scales, 0.5, ScanConfig(PeriodicGrid(32), n_steps=56))
    full = stability_scan(a, None, scales, 0.5, ScanConfig(PeriodicGrid(32), n_steps=56,
                                                           subspace_floor=0.0))
    for (_, w1), (_, w2) in zip(cut.scale_points, full.scale_points):
        assert w1 == pytest.approx(w2, rel=1e-5)


def _backward_run(tag="lip_x", n=128, steps=128, seed=0):
    g = PeriodicGrid(n)
    final = random_field(g, np.random.default_rng(seed), decay=1.5)
    return manufacture_backward(builtin_family(tag), final, 1.0, SolverConfig(g, 1 / steps, 1.0))


def test_transformed_state_formula():
    tr = _backward_run()
    k = 10
    w, wt = transformed_state(tr, PARAMS, k)
    t = tr.times[k]
    factor = PARAMS.gamma - math.exp(log_psi(PARAMS.lam, (t + PARAMS.tau) / PARAMS.beta))
    assert np.allclose(wt.values, factor * w.values + tr.time_derivative(k).values)


@given(st.floats(1e-3, 1e3))
def test_block_inequalities_are_scale_invariant(c):
    tr = _backward_run()
    a = builtin_family("lip_x").field_at(0.1, tr.grid)
    w, wt = transformed_state(tr, PARAMS, 12)
    base = auxp1_terms(a, w, wt, 3, 0.5, 1.0, 0.1).fitted_constant(4.0)
    scaled = auxp1_terms(a, c * w, c * wt, 3, 0.5, 1.0, 0.1).fitted_constant(4.0)
    assert scaled == pytest.approx(base, rel=1e-9)
    base = commutator_pairing_terms(a, w, None, 3, 0.5, 1.0, 0.1).fitted_constant()
    scaled = commutator_pairing_terms(a, c * w, None, 3, 0.5, 1.0, 0.1).fitted_constant()
    assert scaled == pytest.approx(base, rel=1e-9)


def test_transform_residual_decreases_with_refinement():
    res = [max(transform_residual(_backward_run(n=n, steps=s), PARAMS, k, 3) for k in (8, 16, 24))
           for n, s in ((128, 128), (256, 512))]
    assert res[1] < res[0]


def test_backward_operator_residual_decreases():
    res = [backward_operator_residual(_backward_run(steps=s), 20 * s // 128) for s in (128, 256, 512)]
    assert res[0] > res[1] > res[2]


def test_proof_diagnostics_constant_coefficient():
    tr = _backward_run("constant")
    rep = proof_diagnostics(tr, tr.coefficient, 3, 0.5, PARAMS)
    assert set(rep.fitted) == set(DIAGNOSTIC_NAMES)
    for name in ("commutator_sum", "commutator_pairing", "commutator_companion"):
        assert rep.max_fitted()[name] <= 1e-10
    assert len(rep.times) >= 4 and max(rep.times) <= 7 * PARAMS.sigma / 8 + 1e-12
    frozen = {k: calibrate(k, [v + 1.0]) for k, v in rep.max_fitted().items()}
    assert all(rep.passed(frozen).values())
    assert set(rep.as_dict()) == {"times", "n_split", "m", "fitted", "transform_residual"}


def test_proof_diagnostics_zero_field():
    g = PeriodicGrid(128)
    ts = np.linspace(0, 1, 65)
    tr = Trajectory(g, ts, np.zeros((65, 128)), "backward", builtin_family("lip_x"))
    rep = proof_diagnostics(tr, tr.coefficient, 3, 0.5, PARAMS)
    assert all(v == 0.0 for v in rep.max_fitted().values())
