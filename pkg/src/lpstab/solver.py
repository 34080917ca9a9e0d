"""Conservative finite-difference solver for ``v_t = d_x(a d_x v)`` on the torus.

The spatial operator is

    (L v)_i = (a_{i+1/2} (v_{i+1} - v_i) - a_{i-1/2} (v_i - v_{i-1})) / h^2,

with ``a_{i+1/2} = a(t, x_i + h/2)``.  ``L`` is symmetric, negative
semidefinite and annihilates constants, so every theta-step conserves the
discrete mass exactly and does not increase the discrete ``L^2`` norm.

Backward solutions ``u_t + d_x(a d_x u) = 0`` are never integrated directly:
``u(t) = v(T - t)`` where ``v`` solves the forward problem with the
reversed coefficient ``a(T - t, x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .coefficients import CoefficientField
from .grid import Field, PeriodicGrid, l2_norm, sobolev_norm_direct

SCHEMES = {"backward_euler": 1.0, "crank_nicolson": 0.5}


class SolverError(RuntimeError):
    """Raised when a linear solve leaves a large residual."""


@dataclass(frozen=True)
class SolverConfig:
    grid: PeriodicGrid
    dt: float
    T: float
    scheme: str = "crank_nicolson"
    theta_blend: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {sorted(SCHEMES)}, got {self.scheme!r}")
        if not (self.dt > 0 and self.T > 0 and self.dt <= self.T * (1 + 1e-12)):
            raise ValueError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [1/2, 1], got {self.theta}")

    @property
    def theta(self) -> float:
        return SCHEMES[self.scheme] if self.theta_blend is None else float(self.theta_blend)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def with_(self, **kw) -> "SolverConfig":
        d = dict(grid=self.grid, dt=self.dt, T=self.T, scheme=self.scheme,
                 theta_blend=self.theta_blend)
        d.update(kw)
        return SolverConfig(**d)


@dataclass(frozen=True)
class Trajectory:
    """Time samples ``times`` and states ``values[k]`` (one row per time)."""

    grid: PeriodicGrid
    times: np.ndarray
    values: np.ndarray
    direction: str
    coefficient: CoefficientField | None = None
    config: SolverConfig | None = None
    max_solve_residual: float = 0.0

    def __post_init__(self):
        if self.direction not in ("forward", "backward"):
            raise ValueError("direction must be 'forward' or 'backward'")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        self.values.flags.writeable = False
        self.times.flags.writeable = False

    def __len__(self):
        return len(self.times)

    def state(self, k: int) -> Field:
        return Field(self.grid, self.values[k])

    @property
    def states(self):
        return [self.state(k) for k in range(len(self.times))]

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a sample of the trajectory")
        return k

    def at(self, t: float) -> Field:
        return self.state(self.index_of(t))

    def masses(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.grid.spacing

    def l2_norms(self) -> np.ndarray:
        return np.sqrt(np.mean(self.values**2, axis=1))

    def time_derivative(self, k: int) -> Field:
        """Second-order differences: centered inside, one-sided at the ends."""
        t, v = self.times, self.values
        if 0 < k < len(t) - 1:
            d = (v[k + 1] - v[k - 1]) / (t[k + 1] - t[k - 1])
        elif k == 0:
            h = t[1] - t[0]
            d = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
        else:
            h = t[-1] - t[-2]
            d = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
        return Field(self.grid, d)


# ---------------------------------------------------------------------------
# discrete operator and periodic tridiagonal solves
# ---------------------------------------------------------------------------

def apply_operator(a_half: np.ndarray, v: np.ndarray, h: float) -> np.ndarray:
    """``L v`` for midpoint coefficients ``a_half[i] = a_{i+1/2}``; ``v`` may be 2-D (n, k)."""
    a_p = a_half if v.ndim == 1 else a_half[:, None]
    a_m = np.roll(a_half, 1) if v.ndim == 1 else np.roll(a_half, 1)[:, None]
    flux_p = a_p * (np.roll(v, -1, axis=0) - v)
    flux_m = a_m * (v - np.roll(v, 1, axis=0))
    return (flux_p - flux_m) / h**2


def solve_cyclic(diag: np.ndarray, off: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve the symmetric periodic tridiagonal system.

    ``diag[i]`` is the diagonal, ``off[i]`` couples ``i`` and ``i+1`` (with
    ``off[n-1]`` the corner entry coupling ``n-1`` and ``0``).  The corner
    is removed by a Sherman-Morrison update and the remaining tridiagonal
    system goes to LAPACK's banded solver.
    """
    n = diag.size
    corner = off[-1]
    gamma = -diag[0]
    d = diag.copy()
    d[0] -= gamma
    d[-1] -= corner * corner / gamma
    ab = np.zeros((3, n))
    ab[0, 1:] = off[:-1]
    ab[1] = d
    ab[2, :-1] = off[:-1]
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = corner
    rhs2 = rhs if rhs.ndim == 2 else rhs[:, None]
    sol = solve_banded((1, 1), ab, np.column_stack([rhs2, u]), check_finite=False)
    y, z = sol[:, :-1], sol[:, -1]
    vfac = (y[0] + corner * y[-1] / gamma) / (1.0 + z[0] + corner * z[-1] / gamma)
    x = y - np.outer(z, vfac)
    return x if rhs.ndim == 2 else x[:, 0]


def _step_matrices(a_half: np.ndarray, h: float, dt: float, theta: float):
    """Diagonal and off-diagonal of ``I - theta dt L``."""
    r = theta * dt / h**2
    a_m = np.roll(a_half, 1)
    diag = 1.0 + r * (a_half + a_m)
    off = -r * a_half
    return diag, off


def theta_step(v: np.ndarray, a_half: np.ndarray, h: float, dt: float, theta: float):
    """One theta-step; returns the new state and the relative solve residual."""
    rhs = v + (1.0 - theta) * dt * apply_operator(a_half, v, h) if theta < 1 else v
    diag, off = _step_matrices(a_half, h, dt, theta)
    new = solve_cyclic(diag, off, rhs)
    resid = new - theta * dt * apply_operator(a_half, new, h) - rhs
    scale = max(float(np.max(np.abs(rhs))), 1e-300)
    return new, float(np.max(np.abs(resid))) / scale


def solve_forward(a: CoefficientField, v0: Field, config: SolverConfig,
                  save_every: int = 1, residual_tol: float = 1e-9) -> Trajectory:
    """Integrate ``v_t = d_x(a d_x v)`` from ``v0`` over ``[0, T]``."""
    if v0.grid != config.grid:
        raise ValueError("initial field and solver grid differ")
    grid = config.grid
    h, dt, theta = grid.spacing, config.dt, config.theta
    v = np.array(v0.values)
    times, states = [0.0], [v.copy()]
    worst = 0.0
    cached = None
    time_independent = a.is_time_independent()
    for k in range(config.n_steps):
        t_eval = (k + theta) * dt
        if cached is None or not time_independent:
            cached = a.midpoint_values(t_eval, grid)
        v, res = theta_step(v, cached, h, dt, theta)
        worst = max(worst, res)
        if res > residual_tol:
            raise SolverError(f"linear solve residual {res:.3e} at step {k + 1}")
        if (k + 1) % save_every == 0 or k + 1 == config.n_steps:
            times.append((k + 1) * dt)
            states.append(v.copy())
    return Trajectory(grid, np.array(times), np.array(states), "forward", a, config, worst)


def propagate_many(a: CoefficientField, v0: np.ndarray, config: SolverConfig,
                   snapshot_times=()) -> dict:
    """Evolve many initial states at once (columns of ``v0``).

    Returns ``{t: state matrix}`` for each requested snapshot time (which
    must be multiples of ``dt``), plus the final time.
    """
    grid = config.grid
    h, dt, theta = grid.spacing, config.dt, config.theta
    want = {int(round(t / dt)): t for t in snapshot_times}
    want[config.n_steps] = config.T
    out = {}
    v = np.array(v0, dtype=float)
    if 0 in want:
        out[want[0]] = v.copy()
    for k in range(config.n_steps):
        a_half = a.midpoint_values((k + theta) * dt, grid)
        rhs = v + (1.0 - theta) * dt * apply_operator(a_half, v, h) if theta < 1 else v
        diag, off = _step_matrices(a_half, h, dt, theta)
        v = solve_cyclic(diag, off, rhs)
        if k + 1 in want:
            out[want[k + 1]] = v.copy()
    return out


def manufacture_backward(a: CoefficientField, g: Field, T: float | None,
                         config: SolverConfig, save_every: int = 1) -> Trajectory:
    """Backward solution with ``u(T) = g`` obtained by reversing a forward solve."""
    T = config.T if T is None else T
    if abs(T - config.T) > 1e-12 * T:
        raise ValueError("T must match the solver configuration")
    if abs(a.T - T) > 1e-12 * T:
        raise ValueError(f"coefficient horizon {a.T} differs from T={T}")
    fwd = solve_forward(a.reversed(), g, config, save_every)
    times = T - fwd.times[::-1]
    times[0] = 0.0
    return Trajectory(config.grid, times, np.array(fwd.values[::-1]), "backward", a, config,
                      fwd.max_solve_residual)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def mode_decay_oracle(c: float, xi: int, h: float, t: float) -> float:
    """Exact decay of mode ``xi`` under the semi-discrete constant-coefficient operator."""
    lam = c * 4.0 / h**2 * math.sin(0.5 * xi * h) ** 2
    return math.exp(-lam * t)


def mode_amplitude(f: Field, xi: int) -> float:
    """Amplitude of ``cos``/``sin`` content at frequency ``xi``."""
    return 2.0 * abs(f.coefficients[xi % f.grid.n_points])


def backward_residual(traj: Trajectory) -> np.ndarray:
    """``max_i |(u_{k+1} - u_{k-1})/(2 dt) + L(t_k) u_k|`` at interior samples."""
    if traj.direction != "backward" or traj.coefficient is None:
        raise ValueError("need a backward trajectory with its coefficient")
    g, a = traj.grid, traj.coefficient
    out = []
    for k in range(1, len(traj.times) - 1):
        dt2 = traj.times[k + 1] - traj.times[k - 1]
        ut = (traj.values[k + 1] - traj.values[k - 1]) / dt2
        lu = apply_operator(a.midpoint_values(traj.times[k], g), traj.values[k], g.spacing)
        out.append(float(np.max(np.abs(ut + lu))))
    return np.array(out)


def energy_growth_rate(traj: Trajectory) -> float:
    """Smallest ``gamma >= 0`` making ``exp(2 gamma t) ||u(t)||^2`` nondecreasing on the samples."""
    n2 = np.mean(traj.values**2, axis=1)
    if np.any(n2 == 0):
        return 0.0
    rates = -np.diff(np.log(n2)) / (2.0 * np.diff(traj.times))
    return float(max(0.0, rates.max()))


def energy_profile(traj: Trajectory, gamma: float) -> np.ndarray:
    return np.exp(2 * gamma * traj.times) * np.mean(traj.values**2, axis=1)


@dataclass(frozen=True)
class InteriorH1Result:
    lhs: float
    rhs: float
    window: tuple

    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0


def interior_h1_check(traj: Trajectory, sigma_param: float,
                      window=(5.0 / 8.0, 7.0 / 8.0)) -> InteriorH1Result:
    """``(inf_window ||u||_{H^1}^2, sup_window ||u||^2 / sigma)``."""
    lo, hi = window[0] * sigma_param, window[1] * sigma_param
    if lo < traj.times[0] - 1e-12 or hi > traj.times[-1] + 1e-12:
        raise ValueError(f"window [{lo}, {hi}] not covered by the trajectory")
    idx = np.flatnonzero((traj.times >= lo - 1e-12) & (traj.times <= hi + 1e-12))
    if idx.size == 0:
        raise ValueError("no trajectory samples inside the window")
    h1 = min(sobolev_norm_direct(traj.state(k), 1.0) ** 2 for k in idx)
    l2 = max(l2_norm(traj.state(k)) ** 2 for k in idx)
    return InteriorH1Result(h1, l2 / sigma_param, (lo, hi))
