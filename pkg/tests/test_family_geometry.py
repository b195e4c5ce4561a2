import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibermetric.family_geometry import (
    BaseGrid,
    DensityRecipe,
    FamilyConfig,
    FamilySolution,
    MarkedPoint,
    Mode,
    OmegaRecipe,
    TauMap,
    check_curvature_forms,
    config_to_dict,
    curvature_decomposition_residual,
    curvature_forms,
    curvature_laplacian_residual,
    exclusion_mask,
    geodesic_curvature,
    lift_derivative_residual,
    local_geometry,
    log_tangent_lift,
    refine_config,
    semipositivity_report,
    solve_family,
)
from fibermetric.fiber_core import d_zbar, fourier_mode, theta_norm_values

TAU = 0.2 + 1.1j


def product_family(**kw):
    args = dict(base=BaseGrid(0j, 0.1, 9), tau_map=TauMap("constant", TAU), omega=OmegaRecipe("product"), n_side=32)
    args.update(kw)
    return FamilyConfig(**args)


def test_base_grid():
    b = BaseGrid(0.1 + 0.2j, 0.1, 9)
    assert b.dt == pytest.approx(0.025)
    assert b.t(b.mid, b.mid) == pytest.approx(0.1 + 0.2j)
    assert len(b.interior()) == 25
    with pytest.raises(ValueError):
        BaseGrid(0j, 0.1, 8)


def test_tau_maps():
    aff = TauMap("affine", TAU, 0.3 + 0.1j)
    assert aff(0.1) == pytest.approx(TAU + 0.03 + 0.01j)
    assert aff.deriv(0.5) == 0.3 + 0.1j
    deg = TauMap("log-degenerate", 1j, -1.0)
    # tau = tau0 + kappa/(2 pi i) log(1/t); Im tau grows as t -> 0 for Re kappa < 0
    assert deg(0.01).imag > deg(0.1).imag > 1.0
    h = 1e-6
    fd = (deg(0.1 + h) - deg(0.1 - h)) / (2 * h)
    assert deg.deriv(0.1) == pytest.approx(fd, rel=1e-7)
    with pytest.raises(ValueError):
        TauMap("spiral")


def test_mode_amplitude_derivatives():
    m = Mode(1, 0, 0.5, beta=1 + 2j, gamma=0.7)
    t, h = 0.03 - 0.02j, 1e-6
    # d/dt = (d/dx - i d/dy)/2
    dx = (m.a(t + h) - m.a(t - h)) / (2 * h)
    dy = (m.a(t + 1j * h) - m.a(t - 1j * h)) / (2 * h)
    assert m.da(t) == pytest.approx((dx - 1j * dy) / 2, rel=1e-7)
    assert m.dda(t) == pytest.approx(0.35)


def test_marked_point_motion():
    p = MarkedPoint(0.5, 0.25, 0.5, motion=0.1j)
    assert p.position(TAU, 0.2) == pytest.approx(0.5 + 0.25 * TAU + 0.02j)
    assert p.velocity(0.4) == pytest.approx(0.1 + 0.1j)


def test_product_family_has_constant_curvature():
    sol = solve_family(product_family())
    rep = geodesic_curvature(sol)
    assert rep.min_c == pytest.approx(1.0, abs=1e-12)
    assert rep.max_c == pytest.approx(1.0, abs=1e-12)
    assert float(np.max(rep.dbar_v_sq)) < 1e-24


def test_single_mode_family_closed_form():
    # mu = (1 + a(t) cos 2 pi x)/s on a product family: phi, Q, P and c are explicit
    amp, beta, gamma = 0.2, 1 + 0.5j, 0.7
    cfg = FamilyConfig(
        base=BaseGrid(0.05 + 0.02j, 0.1, 9),
        tau_map=TauMap("constant", TAU),
        omega=OmegaRecipe("product"),
        density=DensityRecipe(modes=(dict(k=1, l=0, amp=amp, beta=beta, gamma=gamma),)),
        n_side=64,
    )
    sol = FamilySolution(cfg)
    i = j = cfg.base.mid
    geo = local_geometry(sol, i, j)
    t = geo.t
    s = TAU.imag
    kfac = s / (2 * math.pi**2 * abs(TAU) ** 2)
    m = cfg.density.modes[0]
    cosx = fourier_mode(geo.grid, 1, 0)
    g_ex = (1 + m.a(t) * cosx) / (2 * s)
    Q_ex = -kfac * m.da(t) * d_zbar(cosx, geo.grid)
    P_ex = 1.0 - kfac * m.dda(t) * cosx
    c_ex = P_ex - np.abs(Q_ex) ** 2 / g_ex
    assert np.max(np.abs(geo.g - g_ex)) < 1e-12
    assert np.max(np.abs(geo.Q - Q_ex)) < 1e-10
    assert np.max(np.abs(geo.c - c_ex)) < 1e-10


def test_curvature_forms_agree_on_random_family():
    rng = np.random.default_rng(3)
    modes = tuple(dict(k=int(k), l=int(l), amp=0.01, beta=complex(*rng.normal(size=2)), gamma=float(rng.uniform())) for k, l in ((1, 0), (0, 1), (1, 1)))
    cfg = FamilyConfig(
        base=BaseGrid(0j, 0.1, 9),
        tau_map=TauMap("affine", TAU, 0.3 + 0.1j),
        omega=OmegaRecipe("sheared", modes=modes, shear=0.5),
        density=DensityRecipe(points_B=(dict(x=0.5, y=0.5, exponent=0.5, motion=0.1),), epsilon=0.2),
        n_side=64,
    )
    sol = FamilySolution(cfg)
    geo = local_geometry(sol, 4, 4)
    assert check_curvature_forms(geo) < 1e-10
    f = curvature_forms(geo)
    assert set(f) == {"schur", "wedge", "pairing"}


def test_exclusion_mask_removes_marked_points():
    cfg = product_family(density=DensityRecipe(points_B=(dict(x=0.5, y=0.5, exponent=0.5),), epsilon=0.1))
    mask = exclusion_mask(cfg, 0j)
    g = cfg.grid(0j)
    assert not mask[16, 16]
    assert mask[0, 0]
    assert mask.mean() == pytest.approx(1 - math.pi * 0.15**2, abs=0.03)


def test_log_tangent_lift_is_tangent():
    cfg = FamilyConfig(
        tau_map=TauMap("affine", TAU, 0.3),
        density=DensityRecipe(points_B=(dict(x=0.25, y=0.25, exponent=0.5, motion=0.1),), points_E=(dict(x=0.75, y=0.6, exponent=1.0, motion=-0.2j),)),
        n_side=32,
    )
    t = 0.02
    w = log_tangent_lift(cfg, t)
    g = cfg.grid(t)
    tp = cfg.tau_map.deriv(t)
    for p in cfg.density.points_E + cfg.density.points_B:
        a = p.position(g.tau, t)
        beta = p.velocity(tp) - (a.imag / g.tau.imag) * tp
        # w equals the point velocity at the point (evaluate the blend there)
        h = [theta_norm_values(q.position(g.tau, t), g.tau, np.array([a]))[0] for q in cfg.density.points_E + cfg.density.points_B]
        assert min(h) < 1e-20
        assert np.isfinite(w).all()
        assert abs(beta) > 0


def test_identities_vanish_on_static_product():
    sol = FamilySolution(product_family(lam=1.0, density=DensityRecipe(modes=(dict(k=1, l=0, amp=0.2),))))
    pr = [(4, 4)]
    assert curvature_laplacian_residual(FamilySolution(product_family()), pr) < 1e-10
    assert lift_derivative_residual(sol, "coordinate", pr) < 1e-8


def test_decomposition_needs_ricci_flat_family():
    with pytest.raises(ValueError):
        curvature_decomposition_residual(FamilySolution(product_family(lam=1.0)), [(4, 4)])


def test_decomposition_converges_with_fiber_resolution():
    # fixed point, background moving in t: the residual is set by the fiber grid
    res = []
    for n in (64, 128):
        cfg = product_family(
            density=DensityRecipe(points_B=(dict(x=0.5, y=0.5, exponent=0.5),), epsilon=0.1, modes=(dict(k=0, l=1, amp=0.05, beta=1.0),)),
            n_side=n,
        )
        res.append(curvature_decomposition_residual(FamilySolution(cfg), [(4, 4)]))
    assert res[0] < 1e-5
    assert res[1] < 1e-7
    assert res[0] / res[1] > 100


def test_semipositivity_report_refinement():
    cfg = product_family()
    rep = semipositivity_report(solve_family(cfg), solve_family(refine_config(cfg)), probes=[(4, 4)], refined_probes=[(8, 8)])
    assert rep.flags["positive"]
    assert rep.flags["sign_stable"]


def test_refine_config_nests_samples():
    cfg = product_family()
    fine = refine_config(cfg)
    assert fine.n_side == 64 and fine.base.m_side == 17
    assert fine.base.t(8, 8) == cfg.base.t(4, 4)
    assert fine.base.t(2, 6) == pytest.approx(cfg.base.t(1, 3))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(-0.4, 0.4), st.integers(9, 21).filter(lambda m: m % 2 == 1))
def test_config_dict_roundtrip(s, r, m):
    from fibermetric.cli import family_from_dict

    cfg = FamilyConfig(
        base=BaseGrid(0.01j, 0.1, m),
        tau_map=TauMap("affine", complex(r, s), 0.1 - 0.2j),
        omega=OmegaRecipe("sheared", modes=(dict(k=1, l=2, amp=0.01, beta=1j),), shear=r),
        density=DensityRecipe(points_B=(dict(x=0.5, y=0.25, exponent=0.5, motion=0.1j),), epsilon=0.1),
    )
    assert family_from_dict(config_to_dict(cfg)) == cfg


def test_failed_fiber_reports_coordinates(monkeypatch):
    import fibermetric.family_geometry as fg
    from fibermetric.ma_solver import SolverError

    def boom(cfg, t):
        raise SolverError("degenerate metric at sample (3, 5)")

    monkeypatch.setattr(fg, "_solve_at", boom)
    with pytest.raises(fg.FamilyError) as ei:
        solve_family(product_family(), indices=[(4, 6)])
    assert "(4, 6)" in str(ei.value) and "t=" in str(ei.value)


def test_nonpositive_reference_form_rejected():
    from fibermetric.family_geometry import FamilyError

    cfg = product_family(omega=OmegaRecipe("user-table", modes=(dict(k=1, l=0, amp=5.0),)))
    with pytest.raises(FamilyError):
        cfg.problem(0j)
