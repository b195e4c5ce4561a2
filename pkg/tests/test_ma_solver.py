import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibermetric.fiber_core import Field, MarkedDivisor, RegularizedDensity, TorusGrid, fourier_mode
from fibermetric.ma_solver import (
    FiberProblem,
    metric_density,
    solve,
    solve_ricci_flat,
    solve_semilinear,
    verify_solution,
)

TAU = 0.2 + 1.1j


def flat_omega(g):
    return Field(g, np.full(g.shape, 1.0 / g.area), "density")


def mode_problem(g, amp, lam=0.0, **kw):
    bg = Field(g, 1 + amp * fourier_mode(g, 1, 0), "generic")
    return FiberProblem(g, flat_omega(g), RegularizedDensity(MarkedDivisor(), background=bg), lam=lam, **kw)


def test_omega_mass_is_checked():
    g = TorusGrid(TAU, 32)
    with pytest.raises(ValueError):
        FiberProblem(g, Field(g, np.ones(g.shape), "density"), RegularizedDensity(MarkedDivisor()))


def test_mu_equal_omega_gives_zero():
    g = TorusGrid(TAU, 64)
    s = solve(FiberProblem(g, flat_omega(g), RegularizedDensity(MarkedDivisor())))
    assert np.max(np.abs(s.phi.values)) < 1e-14


def test_single_mode_closed_form():
    # omega + dd^c phi = (1 + a cos 2 pi x)/s gives phi = -a s cos(2 pi x) / (2 pi^2 |tau|^2)
    g = TorusGrid(TAU, 64)
    a = 0.3
    s = solve_ricci_flat(mode_problem(g, a))
    exact = -a * g.im_tau * fourier_mode(g, 1, 0) / (2 * math.pi**2 * abs(TAU) ** 2)
    assert np.max(np.abs(s.phi.values - exact)) < 1e-13


def test_density_mean_zero_normalization():
    g = TorusGrid(TAU, 64)
    p = mode_problem(g, 0.3, normalization="density-mean-zero")
    s = solve(p)
    assert abs(np.sum(s.phi.values * p.mu)) < 1e-12 * np.sum(p.mu)


@settings(max_examples=10, deadline=None)
@given(st.floats(-0.6, 0.6), st.floats(0.05, 3.0))
def test_semilinear_solution_verifies(amp, lam):
    g = TorusGrid(TAU, 32)
    p = mode_problem(g, amp, lam=lam)
    s = solve_semilinear(p)
    assert verify_solution(p, s) < 1e-9
    assert np.all(metric_density(p, np.asarray(s.phi.values)) > 0)


def test_semilinear_linear_mechanism():
    # for small lam the twisted potential differs from the Ricci-flat one by O(lam)
    g = TorusGrid(TAU, 64)
    base = mode_problem(g, 0.3, normalization="density-mean-zero")
    psi0 = np.asarray(solve(base).phi.values)
    diffs = []
    for eps in (0.04, 0.02, 0.01):
        pe = replace(base, epsilon_twist=eps, density=_unit_mass(base))
        diffs.append(np.max(np.abs(np.asarray(solve(pe).phi.values) - psi0)))
    assert diffs[0] / diffs[1] == pytest.approx(2, rel=0.05)
    assert diffs[1] / diffs[2] == pytest.approx(2, rel=0.05)


def _unit_mass(p):
    from fibermetric.fiber_core import normalized

    return normalized(p.density, p.grid)


def test_conic_density_solution_positive():
    g = TorusGrid(TAU, 128)
    d = RegularizedDensity(MarkedDivisor((), ((0.503 + 0.5 * TAU, 0.7),)), 0.01)
    p = FiberProblem(g, flat_omega(g), d)
    s = solve(p)
    assert verify_solution(p, s) < 1e-8
    assert np.min(metric_density(p, np.asarray(s.phi.values))) > 0


def test_verify_uses_independent_path():
    g = TorusGrid(TAU, 32)
    p = mode_problem(g, 0.2)
    s = solve(p)
    bad = replace(s, phi=Field(g, np.asarray(s.phi.values) * 1.01, "potential"))
    assert verify_solution(p, bad) > 1e-4
