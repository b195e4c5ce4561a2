import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibermetric.fiber_core import (
    Field,
    MarkedDivisor,
    RegularizedDensity,
    TorusGrid,
    constant_field,
    d_z,
    d_zbar,
    d_zz,
    d_zzbar,
    evaluate_density,
    fiber_integral,
    fourier_mode,
    laplacian,
    normalization_constant,
    normalized,
    poisson_solve,
    theta_norm_leading_coefficient,
    theta_norm_values,
)

TAU = 0.2 + 1.1j

taus = st.builds(complex, st.floats(-0.5, 0.5), st.floats(0.6, 2.0))
modes = st.tuples(st.integers(-4, 4), st.integers(-4, 4)).filter(lambda kl: kl != (0, 0))


def plane_wave(grid, k, l):
    x, y = grid.lattice_coords()
    return np.exp(2j * np.pi * (k * x + l * y))


# d_z and d_zbar of exp(2 pi i (k x + l y)) with x, y solved from z = x + tau y
def dz_symbol(tau, k, l):
    return 2j * np.pi * (l - k * np.conj(tau)) / (tau - np.conj(tau))


def dzbar_symbol(tau, k, l):
    return 2j * np.pi * (k * tau - l) / (tau - np.conj(tau))


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(0.3 - 0.1j, 64)
    with pytest.raises(ValueError):
        TorusGrid(1j, 48)
    g = TorusGrid(TAU, 32)
    assert g.area == pytest.approx(1.1)
    assert g.cell_area * 32**2 == pytest.approx(g.area)


def test_to_lattice_roundtrip():
    g = TorusGrid(TAU, 16)
    x, y = g.to_lattice(0.37 + 0.52 * TAU)
    assert (x, y) == pytest.approx((0.37, 0.52))


def test_field_rejects_bad_input():
    g = TorusGrid(1j, 16)
    with pytest.raises(ValueError):
        Field(g, np.ones((8, 8)))
    with pytest.raises(ValueError):
        Field(g, -np.ones(g.shape), "density")
    with pytest.raises(ValueError):
        Field(g, np.full(g.shape, np.nan))
    with pytest.raises(ValueError):
        Field(g, np.ones(g.shape), "bogus")


@settings(max_examples=30, deadline=None)
@given(taus, modes)
def test_first_derivatives_of_plane_waves(tau, kl):
    k, l = kl
    g = TorusGrid(tau, 32)
    f = plane_wave(g, k, l)
    assert np.allclose(d_z(f, g), dz_symbol(tau, k, l) * f, atol=1e-9)
    assert np.allclose(d_zbar(f, g), dzbar_symbol(tau, k, l) * f, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(taus, modes)
def test_second_derivatives_of_plane_waves(tau, kl):
    k, l = kl
    g = TorusGrid(tau, 32)
    f = plane_wave(g, k, l)
    assert np.allclose(d_zz(f, g), dz_symbol(tau, k, l) ** 2 * f, atol=1e-8)
    assert np.allclose(d_zzbar(f, g), dz_symbol(tau, k, l) * dzbar_symbol(tau, k, l) * f, atol=1e-8)


def test_laplacian_eigenvalue():
    # Delta cos(2 pi (k x + l y)) = -4 pi^2 |l - k tau|^2 / Im(tau)^2 cos(...)
    g = TorusGrid(TAU, 64)
    f = fourier_mode(g, 2, -1, 0.3)
    lam = -4 * np.pi**2 * abs(-1 - 2 * TAU) ** 2 / TAU.imag**2
    out = laplacian(Field(g, f, "potential")).values
    assert np.max(np.abs(out - lam * f)) <= 1e-9 * abs(lam)


def test_poisson_manufactured_solution():
    g = TorusGrid(TAU, 256)
    phi = 0.3 * fourier_mode(g, 1, 0) + 0.1 * fourier_mode(g, 2, 3, 1.2) - 0.05 * fourier_mode(g, 0, 5)
    src = laplacian(Field(g, phi, "potential"))
    back = poisson_solve(src).values
    assert np.max(np.abs(back - phi)) <= 1e-10 * np.max(np.abs(phi))


def test_poisson_rejects_incompatible_source():
    g = TorusGrid(1j, 32)
    with pytest.raises(ValueError):
        poisson_solve(constant_field(g, 1.0))


@settings(max_examples=20, deadline=None)
@given(taus, st.integers(0, 2**31 - 1))
def test_poisson_laplacian_roundtrip(tau, seed):
    g = TorusGrid(tau, 32)
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=g.shape)
    phi -= phi.mean()
    back = poisson_solve(laplacian(Field(g, phi, "potential"))).values
    assert np.max(np.abs(back - phi)) <= 1e-9 * max(1.0, np.max(np.abs(phi)))


# values from an arbitrary-precision theta_1 evaluation (mpmath jtheta, 30 digits)
@pytest.mark.parametrize(
    "a, z, tau, expected",
    [
        (0.3 + 0.4j, 0.9 + 0.1j, TAU, 0.8839232758917294),
        (0.5 + 0.55j, 0.1 + 0.2j, TAU, 0.94270402481457457),
        (0.0, 0.25 + 0.5j, TAU, 0.94434948352366027),
        (0.0, 0.5 + 0.5j, 1j, 1.1803405990160962),
    ],
)
def test_theta_norm_reference_values(a, z, tau, expected):
    assert theta_norm_values(a, tau, np.array([z]))[0] == pytest.approx(expected, rel=1e-13)


def test_theta_leading_coefficient_reference():
    assert theta_norm_leading_coefficient(TAU) == pytest.approx(7.0008967062510013, rel=1e-13)


@settings(max_examples=40, deadline=None)
@given(taus, st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.integers(-2, 2), st.integers(-2, 2))
def test_theta_norm_is_lattice_periodic(tau, ax, ay, zx, zy, m, n):
    a = ax + tau * ay
    z = zx + tau * zy
    h0 = theta_norm_values(a, tau, np.array([z]))[0]
    h1 = theta_norm_values(a, tau, np.array([z + m + n * tau]))[0]
    assert h1 == pytest.approx(h0, rel=1e-9, abs=1e-14)


def test_theta_norm_vanishes_quadratically():
    a = 0.3 + 0.4 * TAU
    C = theta_norm_leading_coefficient(TAU)
    for r in (1e-2, 1e-3, 1e-4):
        h = theta_norm_values(a, TAU, np.array([a + r * np.exp(0.7j)]))[0]
        assert h / r**2 == pytest.approx(C, rel=5 * r)


def test_divisor_validation():
    with pytest.raises(ValueError):
        MarkedDivisor((), ((0.5j, 1.0),))
    with pytest.raises(ValueError):
        MarkedDivisor(((0.5j, -1.0),), ())
    d = MarkedDivisor(((0.2, 1.0),), ((1.2, 0.5),))
    with pytest.raises(ValueError):
        d.check_distinct(1j)


def test_empty_density_is_background():
    g = TorusGrid(TAU, 32)
    d = RegularizedDensity(MarkedDivisor())
    assert np.all(evaluate_density(d, g).values == 1.0)
    assert normalization_constant(d, g) == pytest.approx(-math.log(g.area))


def test_density_mass_normalization():
    g = TorusGrid(TAU, 64)
    d = RegularizedDensity(MarkedDivisor(((0.25 + 0.3j, 1.0),), ((0.6 + 0.7 * TAU, 0.5),)), 0.1)
    nd = normalized(d, g)
    assert fiber_integral(evaluate_density(nd, g)) == pytest.approx(1.0, rel=1e-12)


def test_density_point_on_sample_raises():
    g = TorusGrid(1j, 16)
    d = RegularizedDensity(MarkedDivisor((), ((0.0, 0.5),)), 0.0)
    with pytest.raises(ValueError):
        evaluate_density(d, g)


def test_scaled_q():
    d = RegularizedDensity(MarkedDivisor(((0.1, 2.0),), ()))
    assert d.scaled_q(1.0).weights == (1.0,)
    assert d.scaled_q(1.5).weights == (0.5,)


def test_fiber_integral_of_mode_is_zero():
    g = TorusGrid(TAU, 32)
    assert abs(fiber_integral(Field(g, fourier_mode(g, 1, 2)))) < 1e-14
    assert fiber_integral(constant_field(g, 2.0)) == pytest.approx(2 * g.area)
