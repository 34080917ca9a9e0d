"""Space-time coefficients ``a(t, x)`` and their time mollification.

Regularity is measured with the quotients

* ellipticity: ``kappa <= a <= 1/kappa``;
* Log-Lipschitz in time: ``|a(t,x) - a(s,x)| / mu(|t-s|)`` with
  ``mu(d) = d (1 + |log d|)``;
* Lipschitz in space: ``A = sup_t max(||a(t)||_inf, ||d_x a(t)||_inf)``.

The mollifier is the normalized bump ``c exp(-1/(1/4 - r^2))`` on
``|r| < 1/2``; ``a_eps(t) = int a(t - eps r) rho(r) dr`` is evaluated with a
fixed Gauss-Legendre rule after extending ``a`` by constants outside
``[0, T]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate

from .grid import Field, PeriodicGrid

FAMILY_TAGS = ("constant", "lip_x", "loglip_t", "oscillatory_control")


class EllipticityError(ValueError):
    """Raised when a coefficient leaves ``[kappa, 1/kappa]`` or kappa is invalid."""


def mu_modulus(d):
    """Vectorized ``d (1 + |log d|)`` with ``mu(0) = 0``."""
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    pos = d > 0
    out[pos] = d[pos] * (1.0 + np.abs(np.log(d[pos])))
    return out


@dataclass(frozen=True)
class CoefficientField:
    """Validated coefficient ``a(t, x)`` on ``[0, T] x torus``.

    ``evaluator(t, x)`` must accept a scalar ``t`` and an array ``x`` and be
    pure.  ``time_derivative``, when present, returns ``d_t a``.
    """

    evaluator: Callable
    kappa: float
    T: float
    declared_A_LL: float
    declared_A: float
    family_tag: str
    params: dict = field(default_factory=dict)
    time_derivative: Callable | None = None
    declared_A_deriv: float | None = None

    def __post_init__(self):
        if self.family_tag not in FAMILY_TAGS:
            raise ValueError(f"unknown family tag {self.family_tag!r}")
        if not 0 < self.kappa < 1:
            raise EllipticityError(
                f"ellipticity constant kappa must lie in (0, 1), got {self.kappa}"
            )
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        ts = np.linspace(0.0, self.T, 33)
        xs = np.linspace(0.0, 2 * np.pi, 128, endpoint=False)
        vals = np.array([self(t, xs) for t in ts])
        if vals.min() < self.kappa or vals.max() > 1.0 / self.kappa:
            raise EllipticityError(
                f"ellipticity violated: a ranges over [{vals.min():.4g}, {vals.max():.4g}], "
                f"not inside [kappa, 1/kappa] = [{self.kappa}, {1 / self.kappa:.4g}]"
            )

    def __call__(self, t, x):
        t = float(min(max(t, 0.0), self.T))
        return np.asarray(self.evaluator(t, np.asarray(x, dtype=float)), dtype=float) * np.ones(
            np.shape(x)
        )

    def dt(self, t, x):
        if self.time_derivative is None:
            raise NotImplementedError("no analytic time derivative available")
        t = float(min(max(t, 0.0), self.T))
        return np.asarray(self.time_derivative(t, np.asarray(x, dtype=float))) * np.ones(
            np.shape(x)
        )

    def field_at(self, t: float, grid: PeriodicGrid) -> Field:
        return Field(grid, self(t, grid.x))

    def midpoint_values(self, t: float, grid: PeriodicGrid) -> np.ndarray:
        """``a(t, x_i + h/2)``."""
        return self(t, grid.x + 0.5 * grid.spacing)

    def reversed(self) -> "CoefficientField":
        """``a(T - t, x)``, used to manufacture backward solutions."""
        T, ev = self.T, self.evaluator
        dt = None
        if self.time_derivative is not None:
            td = self.time_derivative
            dt = lambda t, x: -td(T - t, x)  # noqa: E731
        return replace(self, evaluator=lambda t, x: ev(T - t, x), time_derivative=dt,
                       params={**self.params, "reversed": True})

    def is_time_independent(self) -> bool:
        return bool(self.params.get("time_independent", False))


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------

def _time_profile(profile: str, amplitude: float, t0: float, clip: float, omega: float,
                  terms: int):
    """Return ``(g, g_dot, A_LL of g)`` for the scalar time profile."""
    if profile == "cusp":
        def g(t):
            return amplitude * float(mu_modulus(min(abs(t - t0), clip)))

        def g_dot(t):
            d = abs(t - t0)
            if d == 0 or d >= clip:
                return 0.0
            return amplitude * math.copysign(-math.log(d), t - t0)

        return g, g_dot, amplitude
    if profile == "weierstrass":
        js = np.arange(terms)

        def g(t):
            return amplitude * float(np.sum(2.0 ** (-js) * np.sin(2.0**js * omega * t)))

        def g_dot(t):
            return amplitude * omega * float(np.sum(np.cos(2.0**js * omega * t)))

        return g, g_dot, amplitude * weierstrass_loglip_constant(terms, omega)
    if profile == "lipschitz":
        def g(t):
            return amplitude * min(abs(t - t0), clip)

        def g_dot(t):
            d = abs(t - t0)
            return 0.0 if d >= clip else amplitude * math.copysign(1.0, t - t0)

        # d / mu(d) <= 1 for d <= 1, and the increment is at most clip <= 1
        return g, g_dot, amplitude
    raise ValueError(f"unknown time profile {profile!r}")


def weierstrass_loglip_constant(terms: int, omega: float = 1.0) -> float:
    """Upper bound of ``sup_d sum_j 2^-j |sin(2^j w (t+d)) - sin(2^j w t)| / mu(d)``.

    Each term is at most ``min(w d, 2^(1-j))``; the supremum of the resulting
    piecewise-linear quotient is located on a fine logarithmic grid and
    inflated by 2 percent to cover grid gaps.
    """
    d = np.logspace(-14, 3, 20001)
    num = np.zeros_like(d)
    for j in range(terms):
        num += np.minimum(omega * d, 2.0 ** (1 - j))
    return float(1.02 * np.max(num / mu_modulus(d)))


def builtin_family(tag: str, params: dict | None = None) -> CoefficientField:
    """Construct one of the test coefficients.

    Parameters (all optional)
    -------------------------
    constant: ``value`` (1.0), ``kappa`` (0.9), ``T`` (1.0)
    lip_x: ``mean`` (1.5), ``amplitude`` (0.25), ``frequency`` (1), ``kappa`` (0.55)
    loglip_t: ``profile`` in {cusp, weierstrass, lipschitz} (cusp), ``mean`` (1.2),
        ``amplitude`` (0.4), ``t0``, ``clip`` (0.5), ``omega`` (2 pi / T),
        ``terms`` (12), ``x_amplitude`` (0.2), ``frequency`` (1), ``kappa`` (0.4)
    oscillatory_control: ``mean`` (1.5), ``amplitude`` (0.4), ``omega`` (40),
        ``holder`` (0.3), ``x_amplitude`` (0.2), ``kappa`` (0.4)
    """
    p = dict(params or {})
    T = float(p.pop("T", 1.0))
    if tag == "constant":
        value = float(p.pop("value", 1.0))
        kappa = float(p.pop("kappa", 0.9))
        _reject_extra(tag, p)
        return CoefficientField(
            evaluator=lambda t, x: np.full(np.shape(x), value),
            kappa=kappa, T=T, declared_A_LL=0.0, declared_A=abs(value),
            family_tag=tag, params={"value": value, "time_independent": True},
            time_derivative=lambda t, x: np.zeros(np.shape(x)), declared_A_deriv=0.0,
        )
    if tag == "lip_x":
        mean = float(p.pop("mean", 1.5))
        amp = float(p.pop("amplitude", 0.25))
        freq = int(p.pop("frequency", 1))
        kappa = float(p.pop("kappa", 0.55))
        _reject_extra(tag, p)
        return CoefficientField(
            evaluator=lambda t, x: mean + amp * np.sin(freq * x),
            kappa=kappa, T=T, declared_A_LL=0.0,
            declared_A=max(abs(mean) + abs(amp), abs(amp * freq)),
            family_tag=tag,
            params={"mean": mean, "amplitude": amp, "frequency": freq, "time_independent": True},
            time_derivative=lambda t, x: np.zeros(np.shape(x)),
            declared_A_deriv=abs(amp * freq),
        )
    if tag == "loglip_t":
        profile = str(p.pop("profile", "cusp"))
        mean = float(p.pop("mean", 1.2))
        amp = float(p.pop("amplitude", 0.4))
        t0 = float(p.pop("t0", 0.5 * T))
        clip = float(p.pop("clip", 0.5))
        omega = float(p.pop("omega", 2 * np.pi / T))
        terms = int(p.pop("terms", 12))
        xamp = float(p.pop("x_amplitude", 0.2))
        freq = int(p.pop("frequency", 1))
        kappa = float(p.pop("kappa", 0.4))
        _reject_extra(tag, p)
        if not 0 < clip <= 1:
            raise ValueError("clip must lie in (0, 1]")
        g, g_dot, g_ll = _time_profile(profile, amp, t0, clip, omega, terms)
        ts = np.linspace(0, T, 2049)
        gmax = max(abs(g(t)) for t in ts)
        if profile == "cusp":
            gmax = max(gmax, amp * float(mu_modulus(clip)))
        elif profile == "weierstrass":
            gmax = max(gmax, amp * 2.0)
        elif profile == "lipschitz":
            gmax = max(gmax, amp * clip)
        top = abs(mean) + gmax
        return CoefficientField(
            evaluator=lambda t, x: (mean + g(t)) * (1.0 + xamp * np.sin(freq * x)),
            kappa=kappa, T=T, declared_A_LL=g_ll * (1.0 + abs(xamp)),
            declared_A=top * max(1.0 + abs(xamp), abs(xamp * freq)),
            family_tag=tag,
            params={"profile": profile, "mean": mean, "amplitude": amp, "t0": t0,
                    "clip": clip, "omega": omega, "terms": terms, "x_amplitude": xamp,
                    "frequency": freq},
            time_derivative=lambda t, x: g_dot(t) * (1.0 + xamp * np.sin(freq * x)),
            declared_A_deriv=top * abs(xamp * freq),
        )
    if tag == "oscillatory_control":
        mean = float(p.pop("mean", 1.5))
        amp = float(p.pop("amplitude", 0.4))
        omega = float(p.pop("omega", 40.0))
        holder = float(p.pop("holder", 0.3))
        xamp = float(p.pop("x_amplitude", 0.2))
        kappa = float(p.pop("kappa", 0.4))
        _reject_extra(tag, p)

        def g(t):
            s = math.sin(omega * t)
            return amp * math.copysign(abs(s) ** holder, s)

        return CoefficientField(
            evaluator=lambda t, x: (mean + g(t)) * (1.0 + xamp * np.sin(x)),
            kappa=kappa, T=T, declared_A_LL=math.inf,
            declared_A=(abs(mean) + amp) * (1.0 + abs(xamp)),
            family_tag=tag,
            params={"mean": mean, "amplitude": amp, "omega": omega, "holder": holder,
                    "x_amplitude": xamp},
            declared_A_deriv=(abs(mean) + amp) * abs(xamp),
        )
    raise ValueError(f"unknown coefficient family {tag!r}; expected one of {FAMILY_TAGS}")


def _reject_extra(tag, p):
    if p:
        raise ValueError(f"unknown parameters for {tag}: {sorted(p)}")


# ---------------------------------------------------------------------------
# sampled constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObservedConstants:
    kappa_obs: float
    A_LL_obs: float
    A_obs: float
    A_deriv_obs: float

    def as_dict(self):
        return {k: float(getattr(self, k)) for k in
                ("kappa_obs", "A_LL_obs", "A_obs", "A_deriv_obs")}


def sample_matrix(a, t_samples, x_samples) -> np.ndarray:
    return np.array([a(t, x_samples) for t in t_samples])


def loglip_quotient(values: np.ndarray, t_samples) -> float:
    """``max |a(t_i,x) - a(t_j,x)| / mu(|t_i - t_j|)`` over sample pairs."""
    t = np.asarray(t_samples, dtype=float)
    best = 0.0
    for i in range(len(t) - 1):
        d = np.abs(t[i + 1:] - t[i])
        keep = d > 0
        if not keep.any():
            continue
        diff = np.max(np.abs(values[i + 1:][keep] - values[i]), axis=1)
        best = max(best, float(np.max(diff / mu_modulus(d[keep]))))
    return best


def estimate_constants(a: CoefficientField, t_samples, x_samples) -> ObservedConstants:
    """Sampled suprema of the defining quotients.

    The space-Lipschitz part uses difference quotients between consecutive
    ``x`` samples (wrapping around the torus), so it never exceeds the true
    ``sup |d_x a|``.
    """
    t_samples = np.asarray(t_samples, dtype=float)
    x_samples = np.sort(np.asarray(x_samples, dtype=float))
    if t_samples.size == 0 or x_samples.size == 0:
        raise ValueError("sample grids must be nonempty")
    vals = sample_matrix(a, t_samples, x_samples)
    kappa_obs = float(min(vals.min(), 1.0 / vals.max()))
    a_ll = loglip_quotient(vals, t_samples)
    if x_samples.size > 1:
        xw = np.append(x_samples, x_samples[0] + 2 * np.pi)
        vw = np.concatenate([vals, vals[:, :1]], axis=1)
        a_der = float(np.max(np.abs(np.diff(vw, axis=1)) / np.diff(xw)))
    else:
        a_der = 0.0
    return ObservedConstants(kappa_obs, a_ll, max(float(np.abs(vals).max()), a_der), a_der)


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------

def _bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 0.5
    out[inside] = np.exp(-1.0 / (0.25 - r[inside] ** 2))
    return out


def _bump_prime(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 0.5
    ri = r[inside]
    q = 0.25 - ri**2
    out[inside] = np.exp(-1.0 / q) * (-2.0 * ri / q**2)
    return out


@dataclass(frozen=True)
class MollifierKernel:
    """Normalized bump on ``[-1/2, 1/2]`` with cached Gauss-Legendre nodes."""

    nodes: int = 64
    support_radius: float = 0.5
    normalization: float = field(init=False)
    l1_norm_of_derivative: float = field(init=False)

    def __post_init__(self):
        mass, _ = integrate.quad(lambda r: float(_bump(r)), -0.5, 0.5, epsabs=0, epsrel=1e-13)
        c = 1.0 / mass
        object.__setattr__(self, "normalization", c)
        # rho is unimodal and even, so ||rho'||_1 = 2 rho(0)
        object.__setattr__(self, "l1_norm_of_derivative", 2.0 * c * math.exp(-4.0))

    def __call__(self, r):
        return self.normalization * _bump(r)

    def derivative(self, r):
        return self.normalization * _bump_prime(r)

    def quadrature(self):
        """Nodes and weights of the Gauss-Legendre rule on ``[-1/2, 1/2]``."""
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        return 0.5 * x, 0.5 * w


def mollify_values(a: CoefficientField, t: float, x, eps: float,
                   kernel: MollifierKernel) -> tuple[np.ndarray, np.ndarray]:
    """``(a_eps(t, x), d_t a_eps(t, x))`` by quadrature with clamped extension."""
    r, w = kernel.quadrature()
    x = np.asarray(x, dtype=float)
    rho = kernel(r) * w
    drho = kernel.derivative(r) * w
    val = np.zeros(x.shape)
    der = np.zeros(x.shape)
    for ri, wi, dwi in zip(r, rho, drho):
        s = min(max(t - eps * ri, 0.0), a.T)
        ai = a.evaluator(s, x)
        val = val + wi * ai
        der = der + dwi * ai
    return val, der / eps


def mollify_time(a: CoefficientField, eps: float,
                 kernel: MollifierKernel | None = None) -> CoefficientField:
    """Time mollification ``a_eps``; ellipticity and the space regularity carry over."""
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    kernel = kernel or MollifierKernel()
    base = a

    def ev(t, x):
        return mollify_values(base, t, x, eps, kernel)[0]

    def dt(t, x):
        return mollify_values(base, t, x, eps, kernel)[1]

    return CoefficientField(
        evaluator=ev, kappa=a.kappa, T=a.T, declared_A_LL=a.declared_A_LL,
        declared_A=a.declared_A, family_tag=a.family_tag,
        params={**a.params, "mollified_eps": eps}, time_derivative=dt,
        declared_A_deriv=a.declared_A_deriv,
    )


def a_nu(a: CoefficientField, nu: int, kernel: MollifierKernel | None = None) -> CoefficientField:
    """Mollification at the dyadic scale ``eps = 2^(-2 nu)``."""
    if not 0 <= nu <= 26:
        raise ValueError(f"nu must lie in [0, 26], got {nu}")
    return mollify_time(a, 2.0 ** (-2 * nu), kernel)


def mollification_bounds(A_LL: float, eps: float, kernel: MollifierKernel) -> tuple[float, float]:
    """``(A_LL eps (|log eps| + 1), A_LL ||rho'||_1 (|log eps| + 1))``."""
    ell = abs(math.log(eps)) + 1.0
    return A_LL * eps * ell, A_LL * kernel.l1_norm_of_derivative * ell


@dataclass(frozen=True)
class MollificationReport:
    eps: float
    approx_error: float
    approx_bound: float
    derivative_sup: float
    derivative_fd_sup: float
    derivative_bound: float
    min_value: float
    kappa: float

    @property
    def passed(self) -> bool:
        return (self.approx_error <= self.approx_bound
                and self.derivative_sup <= self.derivative_bound
                and self.derivative_fd_sup <= self.derivative_bound
                and self.min_value >= self.kappa)

    def as_dict(self):
        d = {k: float(getattr(self, k)) for k in self.__dataclass_fields__}
        d["pass"] = self.passed
        return d


def check_mollification(a: CoefficientField, eps: float, t_samples, x_samples,
                        kernel: MollifierKernel | None = None) -> MollificationReport:
    """Sample the three mollification bounds at the given points."""
    kernel = kernel or MollifierKernel()
    x = np.asarray(x_samples, dtype=float)
    err = dsup = fdsup = 0.0
    vmin = math.inf
    h = 1e-3 * eps
    for t in t_samples:
        val, der = mollify_values(a, t, x, eps, kernel)
        err = max(err, float(np.max(np.abs(val - a(t, x)))))
        dsup = max(dsup, float(np.max(np.abs(der))))
        vp, _ = mollify_values(a, t + h, x, eps, kernel)
        vm, _ = mollify_values(a, t - h, x, eps, kernel)
        fdsup = max(fdsup, float(np.max(np.abs(vp - vm))) / (2 * h))
        vmin = min(vmin, float(val.min()))
    b_err, b_der = mollification_bounds(a.declared_A_LL, eps, kernel)
    return MollificationReport(eps, err, b_err, dsup, fdsup, b_der, vmin, a.kappa)
