"""Parameter-schedule studies: limits, weighted inequalities, diagnostics.

Every experiment returns a ConvergenceTable whose rows are ordered by the
schedule.  "Bounded across the schedule" is measured as max/min of a monitor
over the schedule, compared with a stated factor.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .family_geometry import (
    EXCLUSION_RADIUS,
    curvature_laplacian_residual,
    lift_derivative_residual,
    BaseGrid,
    DensityRecipe,
    FamilyConfig,
    FamilySolution,
    OmegaRecipe,
    TauMap,
    exclusion_mask,
    local_geometry,
    log_tangent_lift,
    refine_config,
    semipositivity_report,
    stencil,
    _D,
    _neighbors,
)
from .fiber_core import (
    Field,
    MarkedDivisor,
    RegularizedDensity,
    TorusGrid,
    d_z,
    d_zbar,
    evaluate_density,
    fiber_integral,
    normalized,
    theta_norm_leading_coefficient,
    theta_norm_values,
)
from .ma_solver import FiberProblem, metric_density, solve, solve_ricci_flat, solve_semilinear

SCHEDULE_PARAMETERS = ("epsilon", "delta", "lambda_eff", "base_degeneration", "epsilon_A")


@dataclass(frozen=True)
class Schedule:
    parameter: str
    values: tuple

    def __post_init__(self):
        if self.parameter not in SCHEDULE_PARAMETERS:
            raise ValueError(f"schedule parameter must be one of {SCHEDULE_PARAMETERS}")
        v = tuple(float(x) for x in self.values)
        if not v or any(x <= 0 for x in v) or any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("schedule values must be positive and strictly decreasing")
        object.__setattr__(self, "values", v)

    @classmethod
    def geometric(cls, parameter: str, start: float, count: int = 6, ratio: float = 0.5) -> "Schedule":
        return cls(parameter, tuple(start * ratio**k for k in range(count)))


def fit_order(params, values) -> float:
    """Least-squares slope of log(value) against log(param); nan with < 2 usable rows."""
    p = np.asarray(params, float)
    v = np.asarray(values, float)
    ok = (p > 0) & (v > 0) & np.isfinite(v)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(p[ok]), np.log(v[ok]), 1)[0])


def spread(values) -> float:
    """max/min of positive monitors; inf when some value is not positive."""
    v = np.asarray(values, float)
    if v.size == 0:
        return 1.0
    if np.any(v <= 0):
        return math.inf
    return float(v.max() / v.min())


def decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


@dataclass
class ConvergenceTable:
    name: str
    parameter: str
    rows: list = field(default_factory=list)
    order: float = float("nan")
    verdict: bool = False
    checks: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def add(self, param: float, primary: float, wall: float = 0.0, **secondary) -> None:
        self.rows.append({"param": float(param), "primary": float(primary), "wall": float(wall), **{k: float(v) for k, v in secondary.items()}})

    @property
    def params(self):
        return [r["param"] for r in self.rows]

    @property
    def primary(self):
        return [r["primary"] for r in self.rows]

    def column(self, key):
        return [r[key] for r in self.rows]

    def refit(self, rows=None) -> float:
        rows = self.rows if rows is None else rows
        return fit_order([r["param"] for r in rows], [r["primary"] for r in rows])

    def finish(self, **checks) -> "ConvergenceTable":
        self.checks.update({k: bool(v) for k, v in checks.items()})
        self.verdict = all(self.checks.values())
        return self

    def to_csv(self) -> str:
        keys = [k for k in self.rows[0] if k != "wall"] if self.rows else ["param", "primary"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(keys)
        for r in self.rows:
            w.writerow([repr(r[k]) for k in keys])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "name": self.name,
            "parameter": self.parameter,
            "fitted_order": None if math.isnan(self.order) else self.order,
            "verdict": "pass" if self.verdict else "fail",
            "checks": self.checks,
            "notes": self.notes,
        }

    def timings(self) -> list:
        return [r["wall"] for r in self.rows]


# ---------------------------------------------------------------- identity refinement


def curvature_identity_config(n_side: int = 256, m_side: int = 17) -> FamilyConfig:
    """Ricci-flat calibration family: mild t-dependence so truncation dominates round-off."""
    return FamilyConfig(
        base=BaseGrid(0.05 + 0.02j, 0.4, m_side),
        tau_map=TauMap("constant", 0.2 + 1.1j),
        omega=OmegaRecipe("user-table", modes=(dict(k=1, l=0, amp=0.002, beta=1 + 0.5j, gamma=2.0),)),
        density=DensityRecipe(
            modes=(dict(k=0, l=1, amp=0.01, beta=2 - 1j, gamma=1.0), dict(k=1, l=1, amp=0.01, phase=0.3, beta=1j)),
        ),
        n_side=n_side,
    )


def lift_identity_config(n_side: int = 256, m_side: int = 17) -> FamilyConfig:
    """lam = 1 family with a moving vanishing point and a moving background."""
    return FamilyConfig(
        base=BaseGrid(0.05 + 0.02j, 0.1, m_side),
        tau_map=TauMap("constant", 0.2 + 1.1j),
        omega=OmegaRecipe("user-table", modes=(dict(k=1, l=0, amp=0.002, beta=1 + 0.5j, gamma=0.5),)),
        density=DensityRecipe(
            points_E=(dict(x=0.5, y=0.5, exponent=1.0, motion=0.05),),
            epsilon=0.5,
            modes=(dict(k=0, l=1, amp=0.01, beta=2 - 1j, gamma=0.5),),
        ),
        n_side=n_side,
        lam=1.0,
    )


IDENTITIES = ("curvature-laplacian", "lift-derivative")


def identity_refinement(cfg: FamilyConfig, identity: str = "curvature-laplacian", levels: int = 2,
                        lift_choice: str = "log-tangent", lam_shift: float = 0.1, tol: float = 1e-6,
                        workers: int | None = None) -> ConvergenceTable:
    """Residual of an on-shell identity while n_side and m_side are refined together.

    Rows are keyed by the base spacing dt.  Pass: residual <= tol on the first
    level and a drop by >= 3 per level.  For the lift identity a shifted lam
    must produce a residual >= 0.05 sup|v(phi)| on the finest level.
    """
    if identity not in IDENTITIES:
        raise ValueError(f"identity must be one of {IDENTITIES}")
    tab = ConvergenceTable(identity, "base_degeneration")
    c = cfg
    sol = None
    for lev in range(levels):
        t0 = time.perf_counter()
        probes = _common_probes(cfg, lev)
        sol = FamilySolution(c)
        sol.ensure(stencil(probes), workers)
        if identity == "curvature-laplacian":
            r = curvature_laplacian_residual(sol, probes)
            tab.add(c.base.dt, r, time.perf_counter() - t0, n_side=c.n_side, m_side=c.base.m_side)
        else:
            r, scale = lift_derivative_residual(sol, lift_choice, probes, return_scale=True)
            tab.add(c.base.dt, r, time.perf_counter() - t0, n_side=c.n_side, m_side=c.base.m_side, sup_v_phi=scale)
        if lev < levels - 1:
            c = refine_config(c)
    tab.order = tab.refit()
    p = tab.primary
    drops = [a / b if b > 0 else math.inf for a, b in zip(p, p[1:])]
    tab.notes["drop_factors"] = drops
    checks = dict(first_level=p[0] <= tol, drop=all(d >= 3 for d in drops))
    if identity == "lift-derivative":
        last = tab.rows[-1]
        wrong, _ = lift_derivative_residual(sol, lift_choice, _common_probes(cfg, levels - 1), lam_shift=lam_shift, return_scale=True)
        tab.notes["wrong_lam_residual"] = wrong
        checks["wrong_lam_fires"] = wrong >= 0.05 * last["sup_v_phi"]
    return tab.finish(**checks)


# ---------------------------------------------------------------- single-fiber limits


def twist_limit_experiment(problem: FiberProblem, sched: Schedule) -> ConvergenceTable:
    """sup |psi_eps - psi_0| for (omega + dd^c psi) = e^{eps psi} mu against the linear solve."""
    grid = problem.grid
    mu = normalized(problem.density, grid)
    base = replace(problem, density=mu, lam=0.0, epsilon_twist=0.0, normalization="density-mean-zero")
    psi0 = np.asarray(solve_ricci_flat(base).phi.values)
    tab = ConvergenceTable("twist-limit", sched.parameter)
    for eps in sched.values:
        t0 = time.perf_counter()
        s = solve_semilinear(replace(base, epsilon_twist=eps))
        d = float(np.max(np.abs(np.asarray(s.phi.values) - psi0)))
        tab.add(eps, d, time.perf_counter() - t0, newton_iters=s.newton_iters)
    tab.order = tab.refit()
    trivial = max(tab.primary) <= 1e-12
    return tab.finish(monotone=trivial or decreasing(tab.primary), order=trivial or tab.order >= 0.9)


def _fiber_probes(cfg: FamilyConfig, probes):
    if probes is not None:
        return [tuple(p) for p in probes]
    m = cfg.base.m_side
    q = (m - 1) // 4
    return [(i, j) for i in (q, 2 * q, 3 * q) for j in (q, 2 * q, 3 * q)]


def smoothing_config(b: float = 0.5, n_side: int = 512) -> FamilyConfig:
    """Moving B point on a non-isotrivial family, normalized against the regularized density."""
    return FamilyConfig(
        base=BaseGrid(0j, 0.1, 9),
        tau_map=TauMap("affine", 0.2 + 1.1j, 0.3),
        omega=OmegaRecipe("sheared", modes=(dict(k=1, l=0, amp=0.01, beta=1.0),)),
        density=DensityRecipe(points_B=(dict(x=0.5, y=0.5, exponent=b, motion=0.1),), epsilon=0.1, modes=(dict(k=0, l=1, amp=0.2),)),
        n_side=n_side,
        normalization="density-mean-zero",
    )


def smoothing_convergence(cfg: FamilyConfig, sched: Schedule, probes=None) -> ConvergenceTable:
    """Cauchy differences of the delta-regularized fiber potentials and their sup bound."""
    idx = _fiber_probes(cfg, probes)
    prev = None
    tab = ConvergenceTable("smoothing", sched.parameter)
    sups = []
    for delta in sched.values:
        t0 = time.perf_counter()
        c = cfg.replace(density=cfg.density.with_epsilon(delta))
        phis = [np.asarray(solve(c.problem(c.base.t(*k))).phi.values) for k in idx]
        sup_u = max(float(np.max(np.abs(p))) for p in phis)
        sups.append(sup_u)
        diff = math.nan if prev is None else max(float(np.max(np.abs(a - b))) for a, b in zip(phis, prev))
        prev = phis
        if not math.isnan(diff):
            tab.add(delta, diff, time.perf_counter() - t0, sup_u=sup_u)
    tab.order = tab.refit()
    tab.notes["sup_u_all"] = sups
    tab.notes["sup_u_spread"] = spread(sups)
    trivial = max(tab.primary) <= 1e-12
    return tab.finish(cauchy_decreasing=trivial or decreasing(tab.primary), sup_bounded=spread(sups) <= 1.5)


# ---------------------------------------------------------------- curvature centering


def _curvature_at(cfg: FamilyConfig, i: int, j: int):
    sol = FamilySolution(cfg)
    return local_geometry(sol, i, j)


def centering_config(b: float = 0.5, n_side: int = 1024) -> FamilyConfig:
    """Fixed B point on a product family; only the regularizing weight depends on t.

    As delta -> 0 the weight drops out and the limit is the product family, so
    c must center and dbar v must vanish off the point.
    """
    return FamilyConfig(
        base=BaseGrid(0j, 0.1, 9),
        tau_map=TauMap("constant", 0.2 + 1.1j),
        omega=OmegaRecipe("product"),
        density=DensityRecipe(points_B=(dict(x=0.5, y=0.5, exponent=b),), epsilon=0.1, reg_modes=(dict(k=1, l=0, amp=0.3, beta=1.0),)),
        n_side=n_side,
    )


def curvature_centering(cfg: FamilyConfig, sched: Schedule, index=None) -> ConvergenceTable:
    """Distance of c from its fiber average, off the marked points, along delta."""
    i, j = index or (cfg.base.mid, cfg.base.mid)
    tab = ConvergenceTable("centering", sched.parameter)
    for delta in sched.values:
        t0 = time.perf_counter()
        c = cfg.replace(density=cfg.density.with_epsilon(delta))
        geo = _curvature_at(c, i, j)
        vol = Field(geo.grid, 2 * geo.g, "density")
        mean_c = fiber_integral(Field(geo.grid, geo.c, "generic"), vol)
        mask = geo.mask
        centered = float(np.max(np.abs(geo.c - mean_c)[mask]))
        dc = float(np.max(np.abs(d_z(geo.c, geo.grid))[mask]))
        dbar = float(np.max((np.abs(geo.dbar_v) ** 2)[mask]))
        tab.add(delta, centered, time.perf_counter() - t0, mean_c=mean_c, sup_dc=dc, sup_dbar_v_sq=dbar, min_c=float(np.min(geo.c[mask])))
    tab.order = tab.refit()
    p = tab.primary
    means = [abs(x) for x in tab.column("mean_c")]
    trivial = max(p) <= 1e-10
    return tab.finish(
        centering_decay=trivial or p[-1] <= 0.2 * p[0],
        mean_bounded=spread(means) <= 2,
        dc_decreasing=trivial or decreasing(tab.column("sup_dc")),
    )


# ---------------------------------------------------------------- weighted inequalities


def _grad_sq(f: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Euclidean |grad f|^2 of a real function, 4 |f_z|^2."""
    return 4 * np.abs(d_z(f, grid)) ** 2


def _conic_factor(divisor: MarkedDivisor, eps: float, grid: TorusGrid) -> np.ndarray:
    """prod (eps^2 + h_B)^{b}: the inverse conformal factor of the regularized conic metric."""
    out = np.ones(grid.shape)
    pts = grid.points()
    for a, b in divisor.points_B:
        out = out * (eps**2 + theta_norm_values(a, grid.tau, pts)) ** b
    return out


def _measures(divisor: MarkedDivisor, p: float, eps: float, grid: TorusGrid):
    bg = Field(grid, np.full(grid.shape, 1.0 / grid.im_tau), "generic")
    d = RegularizedDensity(divisor, eps, None, bg)
    mu_q = np.asarray(evaluate_density(d, grid).values)
    mu_qp = np.asarray(evaluate_density(d.scaled_q(p), grid).values)
    return mu_q, mu_qp


def sample_functions(grid: TorusGrid, divisor: MarkedDivisor, n_samples: int, seed: int):
    """Band-limited Fourier sums, lowest modes, and theta-norm bumps near the marked points."""
    rng = np.random.default_rng(seed)
    x, y = grid.lattice_coords()
    kmax = max(1, grid.n_side // 8)
    out = []
    # deterministic low modes: they realize the classical extremals
    for k, l in ((1, 0), (0, 1), (1, 1), (1, -1)):
        out.append(np.cos(2 * np.pi * (k * x + l * y)))
    pts = divisor.all_points() or [0.5 + 0.5 * grid.tau]
    C = theta_norm_leading_coefficient(grid.tau)
    zs = grid.points()
    while len(out) < n_samples:
        kind = rng.integers(3)
        if kind == 0:
            kk = int(rng.integers(1, kmax + 1))
            f = np.zeros(grid.shape)
            for _ in range(4):
                k, l = rng.integers(-kk, kk + 1, size=2)
                f += rng.normal() / (1 + abs(k) + abs(l)) * np.cos(2 * np.pi * (k * x + l * y) + rng.uniform(0, 2 * np.pi))
        else:
            a = pts[int(rng.integers(len(pts)))]
            dist = (0.05, 0.1, 0.3)[int(rng.integers(3))]
            ang = rng.uniform(0, 2 * np.pi)
            c = a + dist * (np.cos(ang) + grid.tau * np.sin(ang))
            width = rng.uniform(0.03, 0.15)
            f = np.exp(-theta_norm_values(c, grid.tau, zs) / (C * width**2))
            if kind == 2:
                f = f + 0.3 * rng.normal() * np.cos(2 * np.pi * (x + y))
        if np.ptp(f) > 1e-8:
            out.append(f)
    return out[:n_samples]


def sobolev_quotient(f: np.ndarray, grid: TorusGrid, mu_q, mu_qp, conic, p: float) -> float:
    ca = grid.cell_area
    r = 2 * p / (2 - p)
    lhs = (np.sum(np.abs(f) ** r * mu_q) * ca) ** (1 / r)
    grad = np.sqrt(_grad_sq(f, grid) * conic)
    rhs = (np.sum(grad**p * mu_qp) * ca + np.sum(np.abs(f) ** p * mu_qp) * ca) ** (1 / p)
    return float(lhs / rhs)


def poincare_quotient(f: np.ndarray, grid: TorusGrid, mu_q, mu_qp, conic, p: float) -> float:
    ca = grid.cell_area
    mass = np.sum(mu_q)
    vm = np.sum(f * mu_q) / mass
    num = np.sum(np.abs(f - vm) ** p * mu_q) / mass
    grad = np.sqrt(_grad_sq(f, grid) * conic)
    den = np.sum(grad**p * mu_qp) * ca
    if den <= 0:
        return 0.0
    return float(num / den)


def sobolev_ratio(grid: TorusGrid, divisor: MarkedDivisor, p: float, eps: float, n_samples: int = 200, seed: int = 0) -> float:
    """Largest sampled ratio LHS/RHS of the weighted Sobolev inequality (lower bound on the constant)."""
    if not 1 <= p < 2:
        raise ValueError("p must lie in [1, 2)")
    mu_q, mu_qp = _measures(divisor, p, eps, grid)
    conic = _conic_factor(divisor, eps, grid)
    return max(sobolev_quotient(f, grid, mu_q, mu_qp, conic, p) for f in sample_functions(grid, divisor, n_samples, seed))


def poincare_ratio(grid: TorusGrid, divisor: MarkedDivisor, p: float, eps: float, n_samples: int = 200, seed: int = 0) -> float:
    """Largest sampled ratio of the weighted Poincare inequality (mean taken against mu_q)."""
    if not 1 <= p < 2:
        raise ValueError("p must lie in [1, 2)")
    mu_q, mu_qp = _measures(divisor, p, eps, grid)
    conic = _conic_factor(divisor, eps, grid)
    return max(poincare_quotient(f, grid, mu_q, mu_qp, conic, p) for f in sample_functions(grid, divisor, n_samples, seed))


def poincare_mode_closed_form(grid: TorusGrid, k: int, l: int, p: float) -> float:
    """Flat quotient of cos(2 pi (k x + l y)): (Im tau / (2 pi |k tau - l|))^p."""
    return (grid.im_tau / (2 * np.pi * abs(k * grid.tau - l))) ** p


def inequality_uniformity(kind: str, grid: TorusGrid, divisor: MarkedDivisor, p: float, sched: Schedule, n_samples=200, seed=0) -> ConvergenceTable:
    fn = sobolev_ratio if kind == "sobolev" else poincare_ratio
    tab = ConvergenceTable(kind, sched.parameter)
    for eps in sched.values:
        t0 = time.perf_counter()
        tab.add(eps, fn(grid, divisor, p, eps, n_samples, seed), time.perf_counter() - t0)
    tab.notes["spread"] = spread(tab.primary)
    return tab.finish(uniform=spread(tab.primary) <= 2)


# ---------------------------------------------------------------- exponent sequences


def iteration_sequences(n: int, k_max: int | None = None) -> list[dict]:
    """Exponents p_k and weight multipliers q_k/q, by recursion and closed forms, exactly."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k_max = n + 1 if k_max is None else k_max
    if not 1 <= k_max <= n + 1:
        raise ValueError(f"k must lie in [1, n + 1] = [1, {n + 1}]")
    rows = []
    p, q = Fraction(1), Fraction(1)
    for k in range(1, k_max + 1):
        closed_p = Fraction(2 * n, 2 * n - k + 1)
        closed_q = Fraction(math.factorial(2 * n) * math.factorial(n - k + 1), math.factorial(n) * math.factorial(2 * n - k + 1))
        rows.append({"k": k, "p": p, "p_closed": closed_p, "q": q, "q_closed": closed_q})
        if k < k_max:
            p, q = 2 * n * p / (2 * n - p), 2 / (2 - p) * q
    return rows


def top_multiplier_formula(n: int) -> Fraction:
    """The stated value (2n)! / (n! 2^n) for q_{n+1}/q."""
    return Fraction(math.factorial(2 * n), math.factorial(n) * 2**n)


def sequences_check(n_max: int = 6) -> dict:
    p_ok, q_ok, top_ok = True, True, True
    detail = {}
    for n in range(1, n_max + 1):
        rows = iteration_sequences(n)
        p_ok &= all(r["p"] == r["p_closed"] for r in rows)
        q_ok &= all(r["q"] == r["q_closed"] for r in rows)
        top = rows[-1]["q"]
        top_ok &= top == top_multiplier_formula(n)
        detail[n] = {"q_top_recursion": str(top), "q_top_stated": str(top_multiplier_formula(n))}
    return {"p_closed_form": p_ok, "q_general_closed_form": q_ok, "q_top_stated_formula": top_ok, "detail": detail}


def iteration_multiplier(n: int = 1) -> Fraction:
    """N produced by iterating the Sobolev step n times (the recursion value)."""
    return iteration_sequences(n)[-1]["q"]


# ---------------------------------------------------------------- transverse diagnostics


def bounded(values, factor: float, floor: float = 1e-12) -> bool:
    v = [abs(x) for x in values]
    if max(v) <= floor:
        return True
    return spread([max(x, floor) for x in v]) <= factor


def transverse_config(kind: str = "B", n_side: int = 512) -> FamilyConfig:
    """Slowly moving marked point (B with b = 1/2, or E with e = 1) on an affine family."""
    pt = (dict(x=0.5, y=0.5, exponent=0.5 if kind == "B" else 1.0, motion=0.01),)
    dens = DensityRecipe(points_B=pt, epsilon=0.1) if kind == "B" else DensityRecipe(points_E=pt, epsilon=0.1)
    return FamilyConfig(
        base=BaseGrid(0j, 0.1, 9),
        tau_map=TauMap("affine", 0.2 + 1.1j, 0.3),
        omega=OmegaRecipe("product"),
        density=dens,
        n_side=n_side,
    )


def transverse_diagnostics(cfg: FamilyConfig, sched: Schedule, index=None, n_multiplier=None) -> ConvergenceTable:
    """Monitors of tau = v(phi_eps) for the log-tangent lift along an epsilon schedule."""
    i, j = index or (cfg.base.mid, cfg.base.mid)
    N = float(iteration_multiplier(1) if n_multiplier is None else n_multiplier)
    tab = ConvergenceTable("transverse", sched.parameter)
    for eps in sched.values:
        t0 = time.perf_counter()
        c = cfg.replace(density=cfg.density.with_epsilon(eps))
        sol = FamilySolution(c)
        geo = local_geometry(sol, i, j)
        grid, t = geo.grid, geo.t
        w = log_tangent_lift(c, t)
        tau_f = geo.phi_D + w * d_z(geo.phi, grid)
        vol = 2 * geo.g
        ca = grid.cell_area
        mean = abs(np.sum(tau_f * vol) * ca)
        grad = 2 * (np.abs(d_z(tau_f, grid)) ** 2 + np.abs(d_zbar(tau_f, grid)) ** 2)
        energy = float(np.sum(grad) * ca)
        l1 = float(np.sum(np.abs(tau_f) * vol) * ca)
        dens = c.density.density(grid, t)
        wts = tuple(N * x for x in dens.weights)
        muN = np.asarray(evaluate_density(dens.with_q(wts), grid).values)
        l2N = float(np.sum(np.abs(tau_f) ** 2 * muN) * ca)
        lip = float(np.max(np.abs(geo.phi_D)[geo.mask]))
        tab.add(eps, mean, time.perf_counter() - t0, energy_ratio=energy / (1 + l1), weighted_l2=l2N, lipschitz=lip)
    tab.notes["N"] = N
    return tab.finish(
        mean_bounded=bounded(tab.primary, 2, 1e-10),
        energy_bounded=bounded(tab.column("energy_ratio"), 2, 1e-10),
        weighted_l2_bounded=bounded(tab.column("weighted_l2"), 2, 1e-10),
        lipschitz_bounded=bounded(tab.column("lipschitz"), 2, 1e-10),
    )


def gradient_config(kind: str = "E", n_side: int = 1024, tau: complex = 0.2 + 1.1j) -> FamilyConfig:
    """One marked point at the cell center (B with b = 0.7 or E with e = 1); flat reference form."""
    pt = (dict(x=0.5, y=0.5, exponent=0.7 if kind == "B" else 1.0),)
    dens = DensityRecipe(points_B=pt, epsilon=0.1) if kind == "B" else DensityRecipe(points_E=pt, epsilon=0.1)
    return FamilyConfig(tau_map=TauMap("constant", tau), omega=OmegaRecipe("product"), density=dens, n_side=n_side)


def twist_limit_config(n_side: int = 128) -> FamilyConfig:
    """B point with b = 1/2 slightly off the grid, on a varying background."""
    return FamilyConfig(
        tau_map=TauMap("constant", 0.2 + 1.1j),
        omega=OmegaRecipe("product"),
        density=DensityRecipe(points_B=(dict(x=0.503, y=0.5, exponent=0.5),), epsilon=0.05, modes=(dict(k=1, l=0, amp=0.3),)),
        n_side=n_side,
    )


def gradient_diagnostic(problem: FiberProblem, sched: Schedule, factor: float = 1.5) -> ConvergenceTable:
    """Conic-metric gradient, osc and omega_phi/omega_B,eps along an epsilon schedule."""
    grid = problem.grid
    div = problem.density.divisor
    tab = ConvergenceTable("gradient", sched.parameter)
    mask = np.ones(grid.shape, dtype=bool)
    for a in div.all_points():
        mask &= grid.lattice_distance(a) >= EXCLUSION_RADIUS
    for eps in sched.values:
        t0 = time.perf_counter()
        p = replace(problem, density=problem.density.with_epsilon(eps))
        s = solve(p)
        phi = np.asarray(s.phi.values)
        conic = _conic_factor(div, eps, grid)
        g2 = _grad_sq(phi, grid) * conic
        wb = 1.0 / conic
        wb = wb / (np.sum(wb) * grid.cell_area)
        ratio = metric_density(p, phi) / wb
        tab.add(
            eps,
            float(np.sqrt(np.max(g2[mask]))),
            time.perf_counter() - t0,
            grad_global=float(np.sqrt(np.max(g2))),
            osc=float(np.ptp(phi)),
            metric_ratio=float(np.max(ratio)),
        )
    return tab.finish(
        gradient_bounded=bounded(tab.primary, factor),
        osc_bounded=bounded(tab.column("osc"), factor),
        metric_ratio_bounded=bounded(tab.column("metric_ratio"), factor),
    )


# ---------------------------------------------------------------- negative curvature and degeneration


def counterexample_config(kappa: complex = 0.5, shear: float = 8.0, a_tt: float = 1.0, n_side: int = 64, m_side: int = 9, radius: float = 0.1) -> FamilyConfig:
    """Non-isotrivial modulus with a sheared reference form that is positive on fibers only."""
    return FamilyConfig(
        base=BaseGrid(0j, radius, m_side),
        tau_map=TauMap("affine" if kappa else "constant", 0.1 + 1.0j, kappa),
        omega=OmegaRecipe("sheared", modes=(dict(k=1, l=0, amp=0.01), dict(k=0, l=1, amp=0.01, phase=0.4)), shear=shear, a_tt=a_tt),
        density=DensityRecipe(),
        n_side=n_side,
    )


def _common_probes(cfg: FamilyConfig, level: int):
    """Probe indices of the coarsest grid mapped to a grid refined ``level`` times."""
    return [(i * 2**level, j * 2**level) for i, j in _fiber_probes(cfg, None)]


def counterexample_experiment(cfg: FamilyConfig, sched: Schedule, levels: int = 3, eps_probes=None):
    """Negative geodesic curvature with a refinement-stable sign, plus the perturbation limit."""
    reports = []
    c = cfg
    for lev in range(levels):
        sol = FamilySolution(c)
        reports.append(semipositivity_report(sol, probes=_common_probes(cfg, lev)))
        c = refine_config(c)
    mins = [r.min_c for r in reports]
    rep = reports[-1]
    rep.flags["min_c_levels"] = mins
    rep.flags["sign_stable"] = bool(len(set(np.sign(mins))) == 1)
    rep.flags["relative_change"] = abs(mins[-1] - mins[-2]) / abs(mins[-1]) if len(mins) > 1 else 0.0
    # perturbation of the reference by a product Kahler form
    idx = _fiber_probes(cfg, eps_probes)
    tab = ConvergenceTable("counterexample-perturbation", sched.parameter)
    phi0 = {k: np.asarray(solve(cfg.problem(cfg.base.t(*k))).phi.values) for k in idx}
    for ea in sched.values:
        t0 = time.perf_counter()
        d = 0.0
        for k in idx:
            p = cfg.problem(cfg.base.t(*k))
            w_a = np.full(p.grid.shape, 1.0 / p.grid.im_tau)
            w = (np.asarray(p.omega.values) + ea * w_a) / (1 + ea)
            pe = replace(p, omega=Field(p.grid, w, "density"))
            phi = (1 + ea) * np.asarray(solve(pe).phi.values)
            d = max(d, float(np.max(np.abs(phi - phi0[k]))))
        tab.add(ea, d, time.perf_counter() - t0)
    tab.order = tab.refit()
    tab.finish(decreasing=decreasing(tab.primary), order=tab.order >= 0.9)
    return rep, tab


def degeneration_t(tau_map: TauMap, im_target: float) -> float:
    """Positive real t with Im tau(t) equal to the target (log-degenerate map)."""
    k = tau_map.kappa
    slope = k.real / (2 * math.pi)  # Im tau(t) = Im tau0 + slope * log t for real t
    if slope >= 0:
        raise ValueError("Im tau grows toward t = 0 only when Re(kappa) < 0")
    return math.exp((im_target - tau_map.tau0.imag) / slope)


def degeneration_experiment(cfg: FamilyConfig, targets=(2, 4, 8, 16, 32)) -> ConvergenceTable:
    """sup phi along fibers approaching a degenerate one (Im tau increasing)."""
    tab = ConvergenceTable("degeneration", "base_degeneration")
    sups = []
    for target in targets:
        t0 = time.perf_counter()
        if cfg.tau_map.kind == "log-degenerate":
            t = degeneration_t(cfg.tau_map, target)
        else:
            t = cfg.base.center
        s = solve(cfg.problem(t))
        phi = np.asarray(s.phi.values)
        sups.append(float(phi.max()))
        tab.add(1.0 / target, float(phi.max()), time.perf_counter() - t0, im_tau=cfg.tau_map(t).imag, inf_phi=float(phi.min()))
    incs = [abs(b - a) for a, b in zip(sups, sups[1:])]
    half = sups[len(sups) // 2 :]
    tv = sum(abs(b - a) for a, b in zip(half, half[1:]))
    running = max(abs(sups[-1]), 1e-300)
    tab.notes["increments"] = incs
    tab.notes["late_variation_relative"] = tv / running
    trivial = max(incs, default=0) <= 1e-12
    return tab.finish(
        increments_decreasing=trivial or decreasing(incs),
        late_variation=trivial or tv <= 0.1 * running,
    )


def neck_config(n_side: int = 512, kappa: float = -1.0, tau0: complex = 0.0 + 1.0j) -> FamilyConfig:
    return FamilyConfig(
        base=BaseGrid(0j, 0.1, 9),
        tau_map=TauMap("log-degenerate", tau0, kappa),
        omega=OmegaRecipe("neck"),
        density=DensityRecipe(),
        n_side=n_side,
        normalization="omega-mean-zero",
    )


def to_json(obj) -> str:
    def enc(o):
        if isinstance(o, Fraction):
            return str(o)
        if isinstance(o, complex):
            return [o.real, o.imag]
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))

    return json.dumps(obj, default=enc, indent=2, sort_keys=True) + "\n"
