"""Periodic grid, discrete Fourier transform and direct Sobolev norms.

Conventions
-----------
The torus ``[0, 2*pi)`` is sampled at ``x_j = 2*pi*j/n``.  The forward
transform is the plain sum ``F[k] = sum_j f_j exp(-i k x_j)`` (``numpy.fft.fft``)
and the inverse carries the ``1/n`` factor.  Fourier coefficients of the
trigonometric interpolant are ``F/n``.

All ``L^2`` quantities use the normalized measure ``dx / (2*pi)``, so that

    ||f||_{L^2}^2 = mean(|f_j|^2) = sum_xi |F[xi] / n|^2.

With this choice a constant field ``c`` has ``L^2`` norm ``|c|`` and every
``H^sigma`` norm of it equals ``|c|``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NORMALIZATION_NOTE = (
    "forward=plain sum (numpy.fft.fft); inverse carries 1/n; "
    "coefficients=F/n; L2 norm uses dx/(2*pi)"
)


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the torus with ``n_points`` samples (a power of two >= 16)."""

    n_points: int
    length: float = field(default=2 * np.pi, init=False)

    def __post_init__(self):
        n = self.n_points
        if not isinstance(n, (int, np.integer)) or n < 16 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 16, got {n!r}")

    @property
    def spacing(self) -> float:
        return self.length / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.spacing * np.arange(self.n_points)

    @property
    def xi(self) -> np.ndarray:
        """Integer frequencies in FFT order; the Nyquist entry is ``-n/2``."""
        return np.fft.fftfreq(self.n_points, 1.0 / self.n_points)

    @property
    def k_max(self) -> int:
        """Index of the last resolved dyadic block."""
        return int(np.log2(self.n_points)) - 1

    @property
    def nyquist_index(self) -> int:
        return self.n_points // 2

    def field(self, values) -> "Field":
        return Field(self, values)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n_points))

    def sample(self, fn) -> "Field":
        """Evaluate ``fn`` at the grid points."""
        return Field(self, np.asarray(fn(self.x), dtype=float) * np.ones(self.n_points))

    def from_spectrum(self, spectrum) -> "Field":
        """Real field whose forward transform is (the Hermitian part of) ``spectrum``."""
        values = np.fft.ifft(np.asarray(spectrum, dtype=complex)).real
        return Field(self, values)


class Field:
    """Real samples on a :class:`PeriodicGrid` with an eagerly computed spectrum.

    Instances are immutable: both arrays are flagged read-only after
    construction, which also makes them safe to share between threads.
    """

    __slots__ = ("grid", "values", "spectrum")

    def __init__(self, grid: PeriodicGrid, values):
        values = np.array(values, dtype=float, copy=True).reshape(-1)
        if values.shape != (grid.n_points,):
            raise ValueError(
                f"expected {grid.n_points} samples, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValueError(f"non-finite sample at index {bad}: {values[bad]!r}")
        values.flags.writeable = False
        spectrum = np.fft.fft(values)
        spectrum.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spectrum", spectrum)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    def __repr__(self):
        return f"Field(n={self.grid.n_points}, l2={l2_norm(self):.6g})"

    # arithmetic on samples; products here are pointwise (aliased), see
    # ``dealiased_product`` for the exact band-limited product
    def _coerce(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return Field(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._coerce(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    @property
    def coefficients(self) -> np.ndarray:
        """Fourier coefficients of the trigonometric interpolant (``F/n``)."""
        return self.spectrum / self.grid.n_points


def forward_transform(f: Field) -> np.ndarray:
    """Plain-sum DFT of the samples (a copy of the cached spectrum)."""
    return np.array(f.spectrum)


def inverse_transform(grid: PeriodicGrid, spectrum) -> Field:
    """Inverse of :func:`forward_transform`; the imaginary roundoff is dropped."""
    return grid.from_spectrum(spectrum)


def apply_multiplier(f: Field, symbol) -> Field:
    """Fourier multiplier with a real, even symbol sampled at ``grid.xi``."""
    return f.grid.from_spectrum(f.spectrum * symbol)


def derivative(f: Field, order: int = 1) -> Field:
    """Spectral derivative ``(i xi)^order``; the Nyquist mode is dropped for odd orders."""
    if not 0 <= order <= 4:
        raise ValueError(f"derivative order must be in [0, 4], got {order}")
    if order == 0:
        return f
    xi = f.grid.xi
    symbol = (1j * xi) ** order
    if order % 2:
        symbol[f.grid.nyquist_index] = 0.0
    return f.grid.from_spectrum(f.spectrum * symbol)


def inner(f: Field, g: Field) -> float:
    """``L^2`` inner product with the normalized measure."""
    return float(np.mean(f.values * g.values))


def l2_norm(f: Field) -> float:
    return float(np.sqrt(np.mean(f.values**2)))


def linf_norm(f: Field) -> float:
    """Grid maximum; a lower bound of the continuum sup norm."""
    return float(np.max(np.abs(f.values)))


def spectral_l2_norm(f: Field) -> float:
    return float(np.sqrt(np.sum(np.abs(f.coefficients) ** 2)))


def gradient_l2_norm(f: Field) -> float:
    """``||d_x f||`` from the spectrum, counting the Nyquist mode at ``|xi| = n/2``."""
    return float(np.sqrt(np.sum(f.grid.xi**2 * np.abs(f.coefficients) ** 2)))


def sobolev_norm_direct(f: Field, sigma: float) -> float:
    """``(sum_xi (1 + xi^2)^sigma |f_hat(xi)|^2)^(1/2)``."""
    if not -2.0 <= sigma <= 2.0:
        raise ValueError(f"sigma must lie in [-2, 2], got {sigma}")
    weight = (1.0 + f.grid.xi**2) ** sigma
    return float(np.sqrt(np.sum(weight * np.abs(f.coefficients) ** 2)))


def lip_norm(f: Field) -> float:
    """``max(||f||_inf, ||f'||_inf)`` on the grid."""
    return max(linf_norm(f), linf_norm(derivative(f, 1)))


def random_field(grid: PeriodicGrid, rng: np.random.Generator, decay: float = 0.0,
                 band: tuple[float, float] | None = None) -> Field:
    """Real Gaussian random field with spectral amplitude ``(1+|xi|)^-decay``.

    ``band=(lo, hi)`` keeps only modes with ``lo <= |xi| <= hi``.  The
    Nyquist mode is always left empty so that the field is band-limited
    in the sense used by the paraproduct module.
    """
    n = grid.n_points
    xi = grid.xi
    amp = (1.0 + np.abs(xi)) ** (-decay)
    coeffs = amp * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    if band is not None:
        lo, hi = band
        coeffs[(np.abs(xi) < lo) | (np.abs(xi) > hi)] = 0.0
    coeffs[grid.nyquist_index] = 0.0
    # Hermitian symmetrization keeps the field real
    spectrum = 0.5 * (coeffs + np.conj(coeffs[(-np.arange(n)) % n]))
    return grid.from_spectrum(spectrum * n)


def single_mode(grid: PeriodicGrid, xi: int, phase: float = 0.0) -> Field:
    return grid.sample(lambda x: np.cos(xi * x + phase))


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def write_field_csv(f: Field, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# n_points={f.grid.n_points}; {NORMALIZATION_NOTE}\n")
        writer = csv.writer(fh)
        writer.writerow(["index", "x", "value"])
        for j, (x, v) in enumerate(zip(f.grid.x, f.values)):
            writer.writerow([j, repr(float(x)), repr(float(v))])


def read_field_csv(path) -> Field:
    rows = _read_rows(path)
    values = np.array([float(r["value"]) for r in rows])
    return Field(PeriodicGrid(len(values)), values)


def write_spectrum_csv(f: Field, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# n_points={f.grid.n_points}; {NORMALIZATION_NOTE}\n")
        writer = csv.writer(fh)
        writer.writerow(["xi", "re", "im"])
        for xi, c in zip(f.grid.xi.astype(int), f.spectrum):
            writer.writerow([int(xi), repr(float(c.real)), repr(float(c.imag))])


def read_spectrum_csv(path) -> tuple[np.ndarray, np.ndarray]:
    rows = _read_rows(path)
    xi = np.array([int(r["xi"]) for r in rows])
    coeffs = np.array([complex(float(r["re"]), float(r["im"])) for r in rows])
    return xi, coeffs


def _read_rows(path):
    text = Path(path).read_text()
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    return list(csv.DictReader(io.StringIO(body)))
