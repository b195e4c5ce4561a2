import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibermetric.analysis_lab import (
    ConvergenceTable,
    Schedule,
    bounded,
    degeneration_experiment,
    degeneration_t,
    fit_order,
    inequality_uniformity,
    iteration_multiplier,
    iteration_sequences,
    neck_config,
    poincare_mode_closed_form,
    poincare_quotient,
    sequences_check,
    spread,
    to_json,
    top_multiplier_formula,
    twist_limit_config,
    twist_limit_experiment,
)
from fibermetric.family_geometry import TauMap
from fibermetric.fiber_core import MarkedDivisor, TorusGrid

TAU = 0.2 + 1.1j


def test_schedule_validation():
    s = Schedule.geometric("epsilon", 0.1, 4)
    assert s.values == pytest.approx((0.1, 0.05, 0.025, 0.0125))
    with pytest.raises(ValueError):
        Schedule("time", (1.0,))
    with pytest.raises(ValueError):
        Schedule("delta", (0.1, 0.2))
    with pytest.raises(ValueError):
        Schedule("delta", (0.1, 0.0))
    with pytest.raises(ValueError):
        Schedule("delta", ())


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.01, 10.0))
def test_fit_order_recovers_power_law(order, scale):
    p = np.array([0.1, 0.05, 0.025, 0.0125])
    assert fit_order(p, scale * p**order) == pytest.approx(order, rel=1e-9)


def test_fit_order_needs_two_rows():
    assert math.isnan(fit_order([0.1], [1.0]))
    assert math.isnan(fit_order([0.1, 0.05], [0.0, -1.0]))


def test_spread_and_bounded():
    assert spread([1.0, 2.0, 1.5]) == 2.0
    assert spread([1.0, 0.0]) == math.inf
    assert bounded([1.0, 1.4], 1.5)
    assert not bounded([1.0, 1.6], 1.5)
    assert bounded([0.0, 1e-14], 1.5)


def test_convergence_table_csv_excludes_wall():
    tab = ConvergenceTable("t", "epsilon")
    tab.add(0.1, 1.0, 3.2, extra=2.0)
    tab.add(0.05, 0.5, 1.1, extra=1.0)
    text = tab.to_csv()
    assert text.splitlines()[0] == "param,primary,extra"
    assert "\r\n" in text and "3.2" not in text
    assert tab.timings() == [3.2, 1.1]
    tab.order = tab.refit()
    assert tab.order == pytest.approx(1.0)
    assert tab.finish(ok=True).summary()["verdict"] == "pass"
    assert tab.finish(other=False).verdict is False


def test_to_json_handles_exact_and_complex():
    assert to_json({"q": Fraction(4, 3), "z": 1 + 2j, "a": np.arange(2)}) == '{\n  "a": [\n    0,\n    1\n  ],\n  "q": "4/3",\n  "z": [\n    1.0,\n    2.0\n  ]\n}\n'


def test_exponent_sequences_small_cases():
    # n = 1: p = 1, 2; n = 2: p = 1, 4/3, 2
    assert [r["p"] for r in iteration_sequences(1)] == [1, 2]
    assert [r["p"] for r in iteration_sequences(2)] == [1, Fraction(4, 3), 2]
    assert [top_multiplier_formula(n) for n in (1, 2)] == [1, 3]


def test_top_multiplier_from_recursion():
    # recursion q_{k+1} = 2/(2 - p_k) q_k gives the central binomial coefficients
    assert [iteration_sequences(n)[-1]["q"] for n in (1, 2, 3)] == [2, 6, 20]
    assert all(iteration_sequences(n)[-1]["q"] == math.comb(2 * n, n) for n in range(1, 7))
    assert iteration_multiplier(1) == 2


def test_sequences_check_flags():
    chk = sequences_check(6)
    assert chk["p_closed_form"]
    assert chk["q_general_closed_form"]
    assert not chk["q_top_stated_formula"]


def test_sequence_range_checked():
    with pytest.raises(ValueError):
        iteration_sequences(0)
    with pytest.raises(ValueError):
        iteration_sequences(2, 4)


@pytest.mark.parametrize("k, l", [(1, 0), (0, 1), (1, 1)])
def test_poincare_quotient_of_mode(k, l):
    # flat weights: the quotient of a single mode is explicit
    g = TorusGrid(TAU, 64)
    x, y = g.lattice_coords()
    f = np.cos(2 * np.pi * (k * x + l * y))
    one = np.full(g.shape, 1.0 / g.area)
    p = 1.5
    q = poincare_quotient(f, g, one, one, np.ones(g.shape), p)
    # both sides are integrals of |cos|^p and |sin|^p, which share the same mean
    assert q == pytest.approx(poincare_mode_closed_form(g, k, l, p), rel=1e-10)


def test_inequality_uniformity_on_e_point():
    g = TorusGrid(TAU, 64)
    div = MarkedDivisor(((0.3 + 0.4 * TAU, 1.0),), ())
    tab = inequality_uniformity("poincare", g, div, 1.0, Schedule("epsilon", (0.1, 0.01)), n_samples=20)
    assert tab.verdict and len(tab.rows) == 2


def test_twist_limit_is_linear_in_epsilon():
    cfg = twist_limit_config(64)
    tab = twist_limit_experiment(cfg.problem(0j), Schedule.geometric("epsilon", 0.1, 4))
    assert tab.verdict
    assert tab.order == pytest.approx(1.0, abs=0.1)


def test_degeneration_t_inverts_tau():
    tm = TauMap("log-degenerate", 1j, -1.0)
    for target in (2, 8):
        assert tm(degeneration_t(tm, target)).imag == pytest.approx(target)
    with pytest.raises(ValueError):
        degeneration_t(TauMap("log-degenerate", 1j, 1.0), 2)


def test_degeneration_neck_small():
    tab = degeneration_experiment(neck_config(64), targets=(2, 4, 8))
    assert len(tab.rows) == 3
    assert all(np.isfinite(tab.primary))
