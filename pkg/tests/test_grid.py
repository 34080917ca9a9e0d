import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lpstab.grid import (
    Field, PeriodicGrid, derivative, forward_transform, gradient_l2_norm, inverse_transform,
    l2_norm, random_field, read_field_csv, read_spectrum_csv, single_mode, sobolev_norm_direct,
    spectral_l2_norm, write_field_csv, write_spectrum_csv,
)

sizes = st.sampled_from([16, 32, 64, 128, 256, 1024])
seeds = st.integers(0, 2**31 - 1)


@pytest.mark.parametrize("n", [8, 15, 17, 100, 0, -16])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(ValueError):
        PeriodicGrid(n)


def test_grid_geometry():
    g = PeriodicGrid(64)
    assert g.k_max == 5
    assert g.spacing == pytest.approx(2 * np.pi / 64)
    assert g.xi[g.nyquist_index] == -32
    assert np.all(np.diff(g.x) > 0) and g.x[-1] < 2 * np.pi


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_nonfinite_samples_rejected(bad):
    vals = np.zeros(16)
    vals[5] = bad
    with pytest.raises(ValueError, match="index 5"):
        Field(PeriodicGrid(16), vals)


def test_field_is_immutable():
    f = PeriodicGrid(16).zeros()
    with pytest.raises(AttributeError):
        f.values = np.ones(16)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


@given(sizes, seeds)
def test_roundtrip(n, seed):
    f = random_field(PeriodicGrid(n), np.random.default_rng(seed))
    back = inverse_transform(f.grid, forward_transform(f))
    assert l2_norm(back - f) <= 1e-12 * l2_norm(f)


@given(sizes, seeds, st.floats(0, 2))
def test_parseval(n, seed, decay):
    f = random_field(PeriodicGrid(n), np.random.default_rng(seed), decay=decay)
    # independent side: direct sample mean of squares
    direct = math.sqrt(sum(v * v for v in f.values) / n)
    assert spectral_l2_norm(f) == pytest.approx(direct, rel=1e-12)


@given(sizes, seeds)
def test_second_derivative_composes(n, seed):
    g = PeriodicGrid(n)
    f = random_field(g, np.random.default_rng(seed), band=(0, n // 4))
    twice = derivative(derivative(f, 1), 1)
    assert l2_norm(twice - derivative(f, 2)) <= 1e-10 * max(1.0, l2_norm(derivative(f, 2)))


@pytest.mark.parametrize("k", [1, 3, 7])
def test_derivative_of_sine(k):
    g = PeriodicGrid(64)
    d = derivative(g.sample(lambda x: np.sin(k * x)), 1)
    assert np.max(np.abs(d.values - k * np.cos(k * g.x))) < 1e-12 * k


def test_derivative_order_range():
    with pytest.raises(ValueError):
        derivative(PeriodicGrid(16).zeros(), 5)


@given(sizes, seeds, st.floats(-2, 2), st.floats(-2, 2))
def test_sobolev_monotone_in_sigma(n, seed, s1, s2):
    f = random_field(PeriodicGrid(n), np.random.default_rng(seed))
    lo, hi = sorted((s1, s2))
    assert sobolev_norm_direct(f, lo) <= sobolev_norm_direct(f, hi) * (1 + 1e-14)


@pytest.mark.parametrize("c", [-2.5, 0.0, 3.0])
@pytest.mark.parametrize("sigma", [-1.0, 0.0, 0.7])
def test_sobolev_of_constant(c, sigma):
    f = PeriodicGrid(32).sample(lambda x: c + 0 * x)
    assert sobolev_norm_direct(f, sigma) == pytest.approx(abs(c), abs=1e-15)


def test_sobolev_single_mode():
    # cos(8x) has coefficients 1/2 at xi = +-8
    f = single_mode(PeriodicGrid(64), 8)
    assert sobolev_norm_direct(f, 1.0) == pytest.approx(math.sqrt(65) * math.sqrt(0.5), rel=1e-13)


def test_sobolev_zero_equals_l2(rng):
    f = random_field(PeriodicGrid(256), rng)
    assert sobolev_norm_direct(f, 0.0) == pytest.approx(l2_norm(f), rel=1e-12)


def test_gradient_norm_of_mode():
    f = single_mode(PeriodicGrid(64), 5)
    assert gradient_l2_norm(f) == pytest.approx(5 * l2_norm(f), rel=1e-13)


def test_csv_roundtrip(tmp_path, rng):
    f = random_field(PeriodicGrid(32), rng)
    write_field_csv(f, tmp_path / "f.csv")
    write_spectrum_csv(f, tmp_path / "s.csv")
    assert (tmp_path / "f.csv").read_text().startswith("# n_points=32")
    g = read_field_csv(tmp_path / "f.csv")
    assert np.array_equal(g.values, f.values)
    xi, coeffs = read_spectrum_csv(tmp_path / "s.csv")
    assert np.array_equal(xi, f.grid.xi.astype(int))
    assert np.array_equal(coeffs, f.spectrum)


def test_random_field_is_real_without_nyquist(rng):
    f = random_field(PeriodicGrid(64), rng)
    assert abs(f.spectrum[32]) < 1e-12
    assert np.allclose(f.spectrum[1:], np.conj(f.spectrum[1:][::-1]))
