import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lpstab.coefficients import builtin_family
from lpstab.grid import PeriodicGrid, l2_norm, random_field
from lpstab.solver import (
    SolverConfig, SolverError, Trajectory, apply_operator, backward_residual, energy_growth_rate,
    energy_profile, interior_h1_check, manufacture_backward, mode_amplitude, mode_decay_oracle,
    propagate_many, solve_cyclic, solve_forward,
)

FAMILIES = [("constant", {}), ("lip_x", {}), ("loglip_t", {}), ("loglip_t", {"profile": "weierstrass"}),
            ("oscillatory_control", {})]


@pytest.mark.parametrize("kw", [dict(dt=0.3, T=1.0), dict(dt=2.0, T=1.0), dict(dt=-0.1, T=1.0),
                                dict(dt=0.1, T=1.0, scheme="rk4"),
                                dict(dt=0.1, T=1.0, theta_blend=0.3)])
def test_solver_config_rejects(kw):
    with pytest.raises(ValueError):
        SolverConfig(PeriodicGrid(16), **kw)


def test_solver_config_steps():
    cfg = SolverConfig(PeriodicGrid(16), 0.1, 1.0)
    assert cfg.n_steps == 10 and cfg.theta == 0.5
    assert cfg.with_(scheme="backward_euler").theta == 1.0


@given(st.integers(0, 2**31 - 1), st.sampled_from([16, 64, 256]))
def test_cyclic_solve_matches_dense(seed, n):
    rng = np.random.default_rng(seed)
    off = -rng.uniform(0.1, 1.0, n)
    diag = 1.0 + np.abs(off) + np.abs(np.roll(off, 1)) + rng.uniform(0, 1, n)
    rhs = rng.standard_normal(n)
    mat = np.diag(diag)
    for i in range(n):
        mat[i, (i + 1) % n] += off[i]
        mat[(i + 1) % n, i] += off[i]
    ref = np.linalg.solve(mat, rhs)
    assert np.max(np.abs(solve_cyclic(diag, off, rhs) - ref)) < 1e-12 * np.max(np.abs(ref)) * n


@pytest.mark.parametrize("xi", [1, 5, 20])
def test_operator_symbol_constant_coefficient(xi):
    g = PeriodicGrid(64)
    v = np.cos(xi * g.x)
    out = apply_operator(np.full(64, 2.0), v, g.spacing)
    expected = -2.0 * 4.0 / g.spacing**2 * math.sin(xi * g.spacing / 2) ** 2 * v
    assert np.max(np.abs(out - expected)) < 1e-9 * max(1.0, np.max(np.abs(expected)))


def test_operator_second_order_consistency():
    errs = []
    for n in (64, 128, 256):
        g = PeriodicGrid(n)
        a_half = 1.5 + 0.5 * np.sin(g.x + g.spacing / 2)
        v = np.sin(2 * g.x)
        exact = 0.5 * np.cos(g.x) * 2 * np.cos(2 * g.x) - (1.5 + 0.5 * np.sin(g.x)) * 4 * np.sin(2 * g.x)
        errs.append(np.max(np.abs(apply_operator(a_half, v, g.spacing) - exact)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 2) < 0.1)


def test_operator_is_symmetric_negative_semidefinite(rng):
    n = 32
    g = PeriodicGrid(n)
    a_half = rng.uniform(0.5, 2.0, n)
    mat = np.column_stack([apply_operator(a_half, e, g.spacing) for e in np.eye(n)])
    assert np.allclose(mat, mat.T, atol=1e-10)
    assert np.max(np.linalg.eigvalsh(0.5 * (mat + mat.T))) < 1e-9
    assert np.allclose(mat.sum(axis=0), 0, atol=1e-9)


def test_mode_decay_oracle_limits():
    assert mode_decay_oracle(1.0, 3, 1e-4, 0.5) == pytest.approx(math.exp(-9 * 0.5), rel=1e-7)
    assert mode_decay_oracle(2.0, 3, 0.1, 0.0) == 1.0


@pytest.mark.parametrize("scheme,nominal", [("crank_nicolson", 2.0), ("backward_euler", 1.0)])
def test_convergence_order(scheme, nominal):
    g = PeriodicGrid(128)
    a = builtin_family("constant")
    v0 = g.sample(lambda x: np.cos(4 * x))
    exact = mode_decay_oracle(1.0, 4, g.spacing, 0.25)
    errs = []
    for steps in (20, 40, 80, 160):
        tr = solve_forward(a, v0, SolverConfig(g, 0.25 / steps, 0.25, scheme), save_every=steps)
        errs.append(abs(mode_amplitude(tr.state(-1), 4) - exact))
    order = np.polyfit(np.log(0.25 / np.array([20, 40, 80, 160])), np.log(errs), 1)[0]
    assert abs(order - nominal) <= 0.2


@pytest.mark.parametrize("tag,params", FAMILIES)
@pytest.mark.parametrize("scheme", ["crank_nicolson", "backward_euler"])
def test_mass_and_monotone_norm(tag, params, scheme, rng):
    a = builtin_family(tag, params)
    g = PeriodicGrid(128)
    v0 = random_field(g, rng, decay=1.0) + 1.0
    tr = solve_forward(a, v0, SolverConfig(g, 1 / 200, 1.0, scheme), save_every=5)
    m = tr.masses()
    assert np.max(np.abs(m - m[0])) <= 1e-10 * abs(m[0])
    n = tr.l2_norms()
    assert np.all(np.diff(n) <= 1e-13 * n[0])


@pytest.mark.parametrize("tag,params", FAMILIES)
def test_manufactured_backward(tag, params, rng):
    a = builtin_family(tag, params)
    g = PeriodicGrid(128)
    final = random_field(g, rng, decay=1.0)
    cfg = SolverConfig(g, 1 / 128, 1.0)
    tr = manufacture_backward(a, final, 1.0, cfg, save_every=4)
    assert tr.direction == "backward" and tr.times[0] == 0.0 and tr.times[-1] == 1.0
    assert np.array_equal(tr.values[-1], final.values)
    assert l2_norm(tr.state(0)) <= l2_norm(tr.state(-1))
    assert energy_growth_rate(tr) == 0.0


def test_manufacture_rejects_mismatch(rng):
    g = PeriodicGrid(32)
    cfg = SolverConfig(g, 0.1, 1.0)
    with pytest.raises(ValueError):
        manufacture_backward(builtin_family("constant"), g.zeros(), 0.5, cfg)
    with pytest.raises(ValueError):
        manufacture_backward(builtin_family("constant", {"T": 2.0}), g.zeros(), None, cfg)


def test_backward_residual_scheme_order(rng):
    a = builtin_family("lip_x")
    g = PeriodicGrid(64)
    final = g.sample(lambda x: np.cos(x) + 0.3 * np.sin(3 * x))
    res = []
    for steps in (64, 128, 256):
        tr = manufacture_backward(a, final, 1.0, SolverConfig(g, 1.0 / steps, 1.0))
        res.append(np.max(backward_residual(tr)))
    assert res[0] / res[1] > 3.0 and res[1] / res[2] > 3.0


def test_backward_residual_requires_backward(rng):
    g = PeriodicGrid(32)
    tr = solve_forward(builtin_family("constant"), g.zeros(), SolverConfig(g, 0.25, 1.0))
    with pytest.raises(ValueError):
        backward_residual(tr)


def test_propagate_many_matches_single_solves(rng):
    a = builtin_family("loglip_t")
    g = PeriodicGrid(64)
    cfg = SolverConfig(g, 1 / 64, 1.0)
    cols = np.column_stack([random_field(g, rng).values for _ in range(3)])
    out = propagate_many(a, cols, cfg, snapshot_times=(0.5,))
    for j in range(3):
        tr = solve_forward(a, g.field(cols[:, j]), cfg)
        assert np.max(np.abs(out[0.5][:, j] - tr.at(0.5).values)) < 1e-12
        assert np.max(np.abs(out[1.0][:, j] - tr.values[-1])) < 1e-12


def test_solver_error_reports_residual():
    g = PeriodicGrid(32)
    cfg = SolverConfig(g, 0.25, 1.0)
    with pytest.raises(SolverError, match="residual"):
        solve_forward(builtin_family("lip_x"), g.sample(np.sin), cfg, residual_tol=-1.0)


def test_trajectory_validation():
    g = PeriodicGrid(16)
    with pytest.raises(ValueError):
        Trajectory(g, np.array([0.0, 0.0]), np.zeros((2, 16)), "forward")
    with pytest.raises(ValueError):
        Trajectory(g, np.array([0.0, 1.0]), np.zeros((2, 16)), "sideways")
    tr = Trajectory(g, np.array([0.0, 0.5, 1.0]), np.zeros((3, 16)), "forward")
    with pytest.raises(ValueError):
        tr.at(0.25)


def test_time_derivative_second_order():
    g = PeriodicGrid(16)
    ts = np.linspace(0, 1, 11)
    vals = np.outer(ts**2, np.ones(16))
    tr = Trajectory(g, ts, vals, "forward")
    for k in (0, 4, 10):
        assert np.allclose(tr.time_derivative(k).values, 2 * ts[k], atol=1e-12)


def test_interior_h1_constant_state():
    g = PeriodicGrid(32)
    ts = np.linspace(0, 1, 9)
    tr = Trajectory(g, ts, np.full((9, 32), 2.0), "backward")
    res = interior_h1_check(tr, 1.0)
    assert res.lhs == pytest.approx(4.0) and res.rhs == pytest.approx(4.0)
    with pytest.raises(ValueError):
        interior_h1_check(tr, 2.0)


def test_interior_h1_refinement_stable(rng):
    a = builtin_family("lip_x")
    g = PeriodicGrid(128)
    final = random_field(g, rng, decay=1.0)
    ratios = []
    for steps in (128, 256):
        tr = manufacture_backward(a, final, 1.0, SolverConfig(g, 1 / steps, 1.0))
        ratios.append(interior_h1_check(tr, 0.5).ratio())
    assert max(ratios) / min(ratios) < 2.0


def test_energy_profile_growth(rng):
    g = PeriodicGrid(32)
    ts = np.linspace(0, 1, 5)
    vals = np.outer(np.exp(-ts), np.ones(32))
    tr = Trajectory(g, ts, vals, "forward")
    rate = energy_growth_rate(tr)
    assert rate == pytest.approx(1.0)
    assert np.allclose(energy_profile(tr, rate), 1.0)
