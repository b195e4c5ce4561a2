"""Families of torus fibers over a small disk in the base.

The total space is parametrized by lattice coordinates (x, y) on the fiber
and the base coordinate t; the fiber coordinate is z = x + tau(t) y.  We work
in the frame (D, d_z) where D = d/dt at fixed (x, y).  D maps periodic
functions to periodic functions and is applied with centered differences on
the base grid, while z-derivatives are spectral.

For a (1,1)-form rho write, in this frame,

    g = rho(d_z, d_zbar)    Q = rho(D, d_zbar)    P = rho(D, Dbar)

(coefficients of i a^b-bar).  For a periodic potential phi

    i dd-bar phi (D, Dbar)   = D Dbar phi
    i dd-bar phi (D, d_zbar) = d_zbar(D phi) + tau' phi_z / (tau - taubar)

The horizontal lift is v = D + w d_z with w = -Q/g, and its chart component
is v^z = tau' y + w.  Since y is not periodic, we store w.  The geodesic
curvature is the Schur complement c = P - |Q|^2 / g.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fld1
from .fiber_core import (
    Field,
    MarkedDivisor,
    RegularizedDensity,
    TorusGrid,
    d_z,
    d_zbar,
    d_zz,
    d_zzbar,
    fourier_mode,
    theta_norm_values,
)
from .ma_solver import FiberProblem, FiberSolution, SolverError, solve, verify_solution

EXCLUSION_RADIUS = 0.15
BASE_MARGIN = 2
WEDGE_CALIBRATION = 2.0  # (n + 1) for one-dimensional fibers
# worker count used by lazy fiber solves; results never depend on it
DEFAULT_WORKERS = 1
TAU_KINDS = ("constant", "affine", "log-degenerate")
OMEGA_KINDS = ("product", "sheared", "user-table", "neck")


class FamilyError(RuntimeError):
    pass


class ConsistencyError(FamilyError):
    pass


# ---------------------------------------------------------------- base and recipes


@dataclass(frozen=True)
class BaseGrid:
    """m_side x m_side square of base samples centered at ``center``, half-width ``radius``."""

    center: complex = 0j
    radius: float = 0.1
    m_side: int = 9

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.m_side < 9 or self.m_side % 2 == 0:
            raise ValueError(f"m_side must be odd and >= 9, got {self.m_side}")

    @property
    def dt(self) -> float:
        return 2 * self.radius / (self.m_side - 1)

    @property
    def mid(self) -> int:
        return self.m_side // 2

    def t(self, i: int, j: int) -> complex:
        return self.center + (i - self.mid) * self.dt + 1j * (j - self.mid) * self.dt

    def indices(self):
        return [(i, j) for i in range(self.m_side) for j in range(self.m_side)]

    def interior(self, margin: int = BASE_MARGIN):
        lo, hi = margin, self.m_side - margin
        return [(i, j) for i in range(lo, hi) for j in range(lo, hi)]


@dataclass(frozen=True)
class TauMap:
    """Holomorphic modulus map t -> tau(t)."""

    kind: str = "constant"
    tau0: complex = 1j
    kappa: complex = 0j

    def __post_init__(self):
        if self.kind not in TAU_KINDS:
            raise ValueError(f"tau map kind must be one of {TAU_KINDS}")
        object.__setattr__(self, "tau0", complex(self.tau0))
        object.__setattr__(self, "kappa", complex(self.kappa))

    def __call__(self, t: complex) -> complex:
        if self.kind == "constant":
            return self.tau0
        if self.kind == "affine":
            return self.tau0 + self.kappa * t
        if t == 0:
            raise ValueError("log-degenerate tau is singular at t = 0")
        return self.tau0 + self.kappa / (2j * math.pi) * np.log(1.0 / t)

    def deriv(self, t: complex) -> complex:
        if self.kind == "constant":
            return 0j
        if self.kind == "affine":
            return self.kappa
        return -self.kappa / (2j * math.pi * t)


@dataclass(frozen=True)
class Mode:
    """cos(2 pi (k x + l y) + phase) with amplitude amp * (1 + Re(beta t) + gamma |t|^2)."""

    k: int
    l: int
    amp: float
    phase: float = 0.0
    beta: complex = 0j
    gamma: float = 0.0

    def a(self, t):
        return self.amp * (1 + (self.beta * t).real + self.gamma * abs(t) ** 2)

    def da(self, t):
        return self.amp * (self.beta / 2 + self.gamma * np.conj(t))

    def dda(self, t):
        return self.amp * self.gamma

    @property
    def t_independent(self) -> bool:
        return self.beta == 0 and self.gamma == 0


def _modes(rows) -> tuple:
    return tuple(m if isinstance(m, Mode) else Mode(**m) for m in rows)


@dataclass(frozen=True)
class OmegaRecipe:
    """Reference form i dd-bar(s y^2 + psi + y a(t)) + (a_tt + chi_tt) i dt^dtbar.

    psi is the sum of the modes; a(t) = shear * (Im tau(t) - Im tau(0)) is
    harmonic.  ``neck`` is a fiber-only profile used by the degeneration
    study and carries no base components.
    """

    kind: str = "product"
    modes: tuple = ()
    shear: float = 0.0
    a_tt: float = 1.0
    chi2: float = 0.0
    chi4: float = 0.0

    def __post_init__(self):
        if self.kind not in OMEGA_KINDS:
            raise ValueError(f"omega recipe must be one of {OMEGA_KINDS}")
        object.__setattr__(self, "modes", _modes(self.modes))
        if self.kind == "product" and (self.shear or any(not m.t_independent for m in self.modes)):
            raise ValueError("product recipe needs t-independent modes and no shear")
        if self.kind == "user-table" and self.shear:
            raise ValueError("user-table recipe takes modes only")

    def coefficient(self, grid: TorusGrid, t: complex) -> np.ndarray:
        """g_omega, the fiber coefficient (half the area density)."""
        s = grid.im_tau
        if self.kind == "neck":
            _, y = grid.lattice_coords()
            # area of a plumbing neck zw = t decays like exp(-4 pi |Im z|) away from the core
            prof = 1.0 / np.cosh(2 * s * np.sin(math.pi * y)) ** 2
            dens = prof / (np.sum(prof) * grid.cell_area)
            return dens / 2.0
        g = np.full(grid.shape, 1.0 / (2 * s))
        for m in self.modes:
            g = g + m.a(t) * d_zzbar(fourier_mode(grid, m.k, m.l, m.phase), grid)
        return g

    def components(self, grid: TorusGrid, t: complex, tau_map: TauMap):
        """(g, Q, P) of the reference form in the (D, d_z) frame."""
        if self.kind == "neck":
            raise ValueError("neck recipe carries no base components")
        tau = grid.tau
        tp = tau_map.deriv(t)
        s = tau.imag
        g = self.coefficient(grid, t)
        Q = np.zeros(grid.shape, dtype=complex)
        P = np.full(grid.shape, self.a_tt + self.chi2 + 4 * self.chi4 * abs(t) ** 2)
        for m in self.modes:
            mj = fourier_mode(grid, m.k, m.l, m.phase)
            Q = Q + m.da(t) * d_zbar(mj, grid) + tp * m.a(t) * d_z(mj, grid) / (tau - np.conj(tau))
            P = P + m.dda(t) * mj
        if self.shear:
            a = self.shear * (s - tau_map(0j).imag) if tau_map.kind != "log-degenerate" else 0.0
            a_t = self.shear * tp / 2j
            Q = Q - a_t / (2j * s) - tp * a / (4 * s * s)
        return g, Q, P


@dataclass(frozen=True)
class MarkedPoint:
    """Point x + tau(t) y + motion * t with exponent (e for E points, b for B points)."""

    x: float
    y: float
    exponent: float
    motion: complex = 0j

    def position(self, tau: complex, t: complex) -> complex:
        return self.x + tau * self.y + complex(self.motion) * t

    def velocity(self, tau_prime: complex) -> complex:
        return tau_prime * self.y + complex(self.motion)


def _points(rows) -> tuple:
    return tuple(p if isinstance(p, MarkedPoint) else MarkedPoint(**p) for p in rows)


@dataclass(frozen=True)
class DensityRecipe:
    """Per-fiber regularized density with moving marked points and background modes."""

    points_E: tuple = ()
    points_B: tuple = ()
    epsilon: float = 0.0
    q: tuple | None = None
    modes: tuple = ()
    reg_modes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "points_E", _points(self.points_E))
        object.__setattr__(self, "points_B", _points(self.points_B))
        object.__setattr__(self, "modes", _modes(self.modes))
        object.__setattr__(self, "reg_modes", _modes(self.reg_modes))

    def marked(self, tau: complex, t: complex) -> list[complex]:
        return [p.position(tau, t) for p in self.points_E + self.points_B]

    def background(self, grid: TorusGrid, t: complex) -> np.ndarray:
        bg = np.ones(grid.shape)
        for m in self.modes:
            bg = bg + m.a(t) * fourier_mode(grid, m.k, m.l, m.phase)
        return bg

    def density(self, grid: TorusGrid, t: complex) -> RegularizedDensity:
        tau = grid.tau
        div = MarkedDivisor(
            tuple((p.position(tau, t), p.exponent) for p in self.points_E),
            tuple((p.position(tau, t), p.exponent) for p in self.points_B),
        )
        bg = Field(grid, self.background(grid, t), "generic") if self.modes else None
        xi = None
        if self.reg_modes:
            xi_v = np.ones(grid.shape)
            for m in self.reg_modes:
                xi_v = xi_v + m.a(t) * fourier_mode(grid, m.k, m.l, m.phase)
            xi = Field(grid, xi_v, "generic")
        return RegularizedDensity(div, self.epsilon, self.q, bg, xi)

    def with_epsilon(self, eps: float) -> "DensityRecipe":
        return DensityRecipe(self.points_E, self.points_B, eps, self.q, self.modes, self.reg_modes)


@dataclass(frozen=True)
class FamilyConfig:
    base: BaseGrid = field(default_factory=BaseGrid)
    tau_map: TauMap = field(default_factory=TauMap)
    omega: OmegaRecipe = field(default_factory=OmegaRecipe)
    density: DensityRecipe = field(default_factory=DensityRecipe)
    n_side: int = 64
    lam: float = 0.0
    epsilon_twist: float = 0.0
    normalization: str = "omega-mean-zero"

    def grid(self, t: complex) -> TorusGrid:
        return TorusGrid(self.tau_map(t), self.n_side)

    def problem(self, t: complex) -> FiberProblem:
        grid = self.grid(t)
        w = 2.0 * self.omega.coefficient(grid, t)
        if np.any(w <= 0):
            raise FamilyError(f"reference form is not positive on the fiber over t={t}")
        return FiberProblem(
            grid,
            Field(grid, w, "density"),
            self.density.density(grid, t),
            self.lam,
            self.epsilon_twist,
            self.normalization,
        )

    def replace(self, **kw) -> "FamilyConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return FamilyConfig(**d)


# ---------------------------------------------------------------- solving


def _solve_at(cfg: FamilyConfig, t: complex) -> tuple[FiberSolution, float]:
    p = cfg.problem(t)
    s = solve(p)
    return s, verify_solution(p, s)


class FamilySolution:
    """Fiber potentials indexed by base sample (i, j); missing fibers are solved on demand."""

    def __init__(self, config: FamilyConfig, phi: dict | None = None, diagnostics: dict | None = None):
        self.config = config
        self.phi: dict = dict(phi or {})
        self.diagnostics: dict = dict(diagnostics or {})
        self._geom: dict = {}

    def t(self, i: int, j: int) -> complex:
        return self.config.base.t(i, j)

    def ensure(self, idx, workers: int | None = None) -> None:
        workers = DEFAULT_WORKERS if workers is None else workers
        todo = sorted({tuple(k) for k in idx} - set(self.phi))
        if not todo:
            return
        ts = [self.t(*k) for k in todo]
        if workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                futs = [ex.submit(_solve_at, self.config, t) for t in ts]
                results = []
                for k, t, f in zip(todo, ts, futs):
                    try:
                        results.append(f.result())
                    except SolverError as e:
                        raise FamilyError(f"fiber solve failed at t={t} (index {k}): {e}") from e
        else:
            results = []
            for k, t in zip(todo, ts):
                try:
                    results.append(_solve_at(self.config, t))
                except SolverError as e:
                    raise FamilyError(f"fiber solve failed at t={t} (index {k}): {e}") from e
        for k, (s, r) in zip(todo, results):
            self.phi[k] = s.phi
            self.diagnostics[k] = {"residual_inf": s.residual_inf, "verify": r, "newton_iters": s.newton_iters}

    def potential(self, i: int, j: int) -> np.ndarray:
        self.ensure([(i, j)])
        return np.asarray(self.phi[(i, j)].values)

    def with_potentials(self, fn) -> "FamilySolution":
        """Copy with phi(i, j) replaced by fn(i, j, phi); used by perturbation probes."""
        self.ensure(self.phi.keys())
        new = {k: Field(f.grid, fn(k[0], k[1], np.asarray(f.values)), "potential") for k, f in self.phi.items()}
        return FamilySolution(self.config, new, {})

    def max_residual(self) -> float:
        return max((d["verify"] for d in self.diagnostics.values()), default=0.0)


def solve_family(cfg: FamilyConfig, workers: int | None = None, indices=None) -> FamilySolution:
    """Solve every base fiber (or the listed indices) in index order."""
    sol = FamilySolution(cfg)
    sol.ensure(cfg.base.indices() if indices is None else indices, workers)
    return sol


def stencil(idx) -> list:
    """Base indices needed for centered stencils at the given points."""
    out = set()
    for i, j in idx:
        out.update([(i, j), (i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)])
    return sorted(out)


# ---------------------------------------------------------------- local geometry


def _D(f, dt):
    """Centered d/dt at fixed lattice point from the four neighbors (E, W, N, S)."""
    fe, fw, fn, fs = f
    return ((fe - fw) - 1j * (fn - fs)) / (4 * dt)


def _DDbar(f0, f, dt):
    fe, fw, fn, fs = f
    return (fe + fw + fn + fs - 4 * f0) / (4 * dt * dt)


def _neighbors(i, j):
    return [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]


def _mixed(fD: np.ndarray, f: np.ndarray, grid: TorusGrid, tp: complex) -> np.ndarray:
    """i dd-bar f (D, d_zbar) given D f."""
    tau = grid.tau
    return d_zbar(fD, grid) + tp * d_z(f, grid) / (tau - np.conj(tau))


def _hessian_along(f0, fD, fDD, w, grid, tp):
    """i dd-bar f (v, vbar) for v = D + w d_z."""
    mixed = _mixed(fD, f0, grid, tp)
    return fDD + 2 * np.real(np.conj(w) * mixed) + np.abs(w) ** 2 * d_zzbar(f0, grid)


def exclusion_mask(cfg: FamilyConfig, t: complex, radius: float = EXCLUSION_RADIUS) -> np.ndarray:
    grid = cfg.grid(t)
    mask = np.ones(grid.shape, dtype=bool)
    for a in cfg.density.marked(grid.tau, t):
        mask &= grid.lattice_distance(a) >= radius
    return mask


@dataclass
class LocalGeometry:
    t: complex
    grid: TorusGrid
    tau_prime: complex
    phi: np.ndarray
    phi_D: np.ndarray
    g: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    w: np.ndarray
    c: np.ndarray
    dbar_v: np.ndarray
    psi: np.ndarray
    theta: np.ndarray
    g_omega: np.ndarray
    Q_omega: np.ndarray
    mask: np.ndarray


def _fiber_coefficient(cfg: FamilyConfig, t: complex, phi: np.ndarray) -> np.ndarray:
    grid = cfg.grid(t)
    return cfg.omega.coefficient(grid, t) + d_zzbar(phi, grid)


def local_geometry(sol: FamilySolution, i: int, j: int) -> LocalGeometry:
    """Total-space form, lift, curvature and the weight pairing at base sample (i, j)."""
    key = (i, j)
    if key in sol._geom:
        return sol._geom[key]
    cfg = sol.config
    m = cfg.base.m_side
    if not (1 <= i < m - 1 and 1 <= j < m - 1):
        raise ValueError(f"base sample {key} has no centered stencil (not computed)")
    nb = _neighbors(i, j)
    sol.ensure([key] + nb)
    dt = cfg.base.dt
    t = sol.t(i, j)
    grid = cfg.grid(t)
    tp = cfg.tau_map.deriv(t)
    phi = sol.potential(i, j)
    phin = [sol.potential(*k) for k in nb]
    phi_D = _D(phin, dt)
    g_w, Q_w, P_w = cfg.omega.components(grid, t, cfg.tau_map)
    g = g_w + d_zzbar(phi, grid)
    if np.any(g <= 0):
        bad = np.argwhere(g <= 0)[0]
        raise FamilyError(f"metric degenerate at t={t}, sample {tuple(int(b) for b in bad)}")
    Q = Q_w + _mixed(phi_D, phi, grid, tp)
    P = P_w + _DDbar(phi, phin, dt)
    w = -Q / g
    c = P - np.abs(Q) ** 2 / g
    dbar_v = -tp / (grid.tau - np.conj(grid.tau)) + d_zbar(w, grid)
    psi = np.log(g)
    psin = []
    for k, f in zip(nb, phin):
        gk = _fiber_coefficient(cfg, sol.t(*k), f)
        if np.any(gk <= 0):
            raise FamilyError(f"metric degenerate at t={sol.t(*k)}")
        psin.append(np.log(gk))
    theta = _hessian_along(psi, _D(psin, dt), _DDbar(psi, psin, dt), w, grid, tp)
    geo = LocalGeometry(t, grid, tp, phi, phi_D, g, Q, P, w, c, dbar_v, psi, theta, g_w, Q_w, exclusion_mask(cfg, t))
    sol._geom[key] = geo
    return geo


# ---------------------------------------------------------------- public operations


def horizontal_lift(sol: FamilySolution, i: int, j: int, stencil: str = "centered") -> np.ndarray:
    """Periodic part w of the lift v = D + w d_z (chart component tau' y + w).

    ``stencil="onesided4"`` recomputes D phi with a fourth-order one-sided
    difference along each base direction, as an independent check.
    """
    if stencil == "centered":
        return local_geometry(sol, i, j).w
    if stencil != "onesided4":
        raise ValueError("stencil must be 'centered' or 'onesided4'")
    cfg = sol.config
    m, dt = cfg.base.m_side, cfg.base.dt
    coef = np.array([-25, 48, -36, 16, -3]) / (12 * dt)

    def deriv(axis):
        sign = 1 if (i, j)[axis] + 4 < m else -1
        ks = [(i + sign * r, j) if axis == 0 else (i, j + sign * r) for r in range(5)]
        sol.ensure(ks)
        return sign * sum(cf * sol.potential(*k) for cf, k in zip(coef, ks))

    phi_D = (deriv(0) - 1j * deriv(1)) / 2
    t = sol.t(i, j)
    grid = cfg.grid(t)
    tp = cfg.tau_map.deriv(t)
    phi = sol.potential(i, j)
    g_w, Q_w, _ = cfg.omega.components(grid, t, cfg.tau_map)
    g = g_w + d_zzbar(phi, grid)
    Q = Q_w + _mixed(phi_D, phi, grid, tp)
    return -Q / g


def curvature_forms(geo: LocalGeometry) -> dict:
    """c by the Schur complement, by the wedge expansion and by the lift pairing."""
    g, Q, P, w = geo.g, geo.Q, geo.P, geo.w
    schur = P - np.abs(Q) ** 2 / g
    # rho^2 = 2 (P g - |Q|^2) (i dt^dtbar)^(i dz^dzbar) and rho^n ^ i dt^dtbar = g (...)
    top = 2.0 * (P * g - (Q * np.conj(Q)).real)
    wedge = top / (WEDGE_CALIBRATION * g)
    pair = P + 2 * np.real(np.conj(w) * Q) + np.abs(w) ** 2 * g
    return {"schur": schur, "wedge": wedge, "pairing": pair}


def check_curvature_forms(geo: LocalGeometry, tol: float = 1e-10) -> float:
    f = curvature_forms(geo)
    scale = 1 + np.abs(f["schur"])
    err = max(float(np.max(np.abs(f[k] - f["schur"]) / scale)) for k in ("wedge", "pairing"))
    if err > tol:
        raise ConsistencyError(f"curvature formulas disagree by {err:.3e} (relative)")
    return err


def curvature_laplacian_residual_at(geo: LocalGeometry) -> np.ndarray:
    """-c_zzbar / g - (|dbar v|^2 - Theta(v, vbar)), pointwise."""
    lhs = -d_zzbar(geo.c, geo.grid) / geo.g
    rhs = np.abs(geo.dbar_v) ** 2 - geo.theta
    return lhs - rhs


def _probe_points(sol: FamilySolution, probes) -> list:
    if probes is None:
        return sol.config.base.interior()
    return [tuple(p) for p in probes]


def curvature_laplacian_residual(sol: FamilySolution, probes=None) -> float:
    """Sup of the fiber Laplacian identity for c off the marked points."""
    out = 0.0
    for i, j in _probe_points(sol, probes):
        geo = local_geometry(sol, i, j)
        r = curvature_laplacian_residual_at(geo)
        out = max(out, float(np.max(np.abs(r[geo.mask]))))
    return out


def _log_point_term(S0, SD, w, grid, beta, delta2):
    """i dd-bar log(S + delta^2) (v, vbar) from the closed form of log S."""
    s = grid.im_tau
    h_log = -math.pi / s * np.abs(w - beta) ** 2
    vS = SD + w * d_z(S0, grid)
    return S0 * h_log / (S0 + delta2) + delta2 * np.abs(vS) ** 2 / (S0 * (S0 + delta2) ** 2)


def curvature_decomposition_residual(sol: FamilySolution, probes=None) -> float:
    """Sup mismatch between Theta(v, vbar) and its term-by-term expansion.

    On shell log g = C(t) + log(background/2) + sum q log(h_E + d^2) - sum b log(h_B + d^2),
    so Theta splits into D Dbar C, the background Hessian and one closed-form
    term per marked point.  Only reg_weight = 1 is supported.
    """
    cfg = sol.config
    if cfg.lam or cfg.epsilon_twist:
        raise ValueError("decomposition applies to the Ricci-flat family")
    if cfg.density.reg_modes:
        raise ValueError("decomposition assumes reg_weight = 1")
    dt = cfg.base.dt
    d2 = cfg.density.epsilon**2
    out = 0.0
    for i, j in _probe_points(sol, probes):
        geo = local_geometry(sol, i, j)
        nb = _neighbors(i, j)
        ts = [sol.t(*k) for k in nb]
        grid, t, w = geo.grid, geo.t, geo.w

        def logC(tt):
            p = cfg.problem(tt)
            return -p.log_mass

        C0, Cn = logC(t), [logC(tt) for tt in ts]
        total = np.full(grid.shape, _DDbar(C0, Cn, dt), dtype=float)
        if cfg.density.modes:
            lb0 = np.log(cfg.density.background(grid, t))
            lbn = [np.log(cfg.density.background(cfg.grid(tt), tt)) for tt in ts]
            total = total + _hessian_along(lb0, _D(lbn, dt), _DDbar(lb0, lbn, dt), w, grid, geo.tau_prime)
        pts = [(p, (cfg.density.q or [pp.exponent for pp in cfg.density.points_E])[k]) for k, p in enumerate(cfg.density.points_E)]
        pts += [(p, -p.exponent) for p in cfg.density.points_B]
        for p, wt in pts:
            if wt == 0:
                continue

            def S(tt):
                gg = cfg.grid(tt)
                return theta_norm_values(p.position(gg.tau, tt), gg.tau, gg.points())

            S0 = S(t)
            SD = _D([S(tt) for tt in ts], dt)
            a = p.position(grid.tau, t)
            beta = p.velocity(geo.tau_prime) - (a.imag / grid.im_tau) * geo.tau_prime
            # a sample sitting on the point gives 0/0 there; it is masked below
            with np.errstate(divide="ignore", invalid="ignore"):
                total = total + wt * _log_point_term(S0, SD, w, grid, beta, d2)
        diff = geo.theta - total
        out = max(out, float(np.max(np.abs(diff[geo.mask]))))
    return out


def log_tangent_lift(cfg: FamilyConfig, t: complex) -> np.ndarray:
    """Smooth w with D + w d_z tangent to every moving marked point.

    Blend of the point velocities with weights W_j / (sum W_i + prod h_i),
    W_j = prod_{k != j} h_k, where h are theta section norms.
    """
    grid = cfg.grid(t)
    tau = grid.tau
    tp = cfg.tau_map.deriv(t)
    pts = cfg.density.points_E + cfg.density.points_B
    if not pts:
        return np.zeros(grid.shape, dtype=complex)
    zs = grid.points()
    h = [theta_norm_values(p.position(tau, t), tau, zs) for p in pts]
    prod_all = np.prod(h, axis=0)
    W = [np.prod([h[k] for k in range(len(h)) if k != j], axis=0) if len(h) > 1 else np.ones(grid.shape) for j in range(len(h))]
    den = sum(W) + prod_all
    w = np.zeros(grid.shape, dtype=complex)
    for p, Wj in zip(pts, W):
        a = p.position(tau, t)
        beta = p.velocity(tp) - (a.imag / tau.imag) * tp
        w = w + beta * Wj / den
    return w


def lift_derivative_residual(sol: FamilySolution, lift_choice: str = "coordinate", probes=None, lam_shift: float = 0.0, return_scale: bool = False):
    """Sup residual of the derivative of the fiber equation along a smooth lift.

    With F = log(mu / omega) and v = D + w d_z, on shell

        [(v phi)_zzbar - phi_zz dbar(v^z) - phi_z w_zzbar + d_z(Q_omega + w g_omega)] / g
            = lam v(phi) + v(F) + d_z(Q_omega + w g_omega) / g_omega
    """
    cfg = sol.config
    lam = cfg.lam + cfg.epsilon_twist + lam_shift
    dt = cfg.base.dt
    out, scale = 0.0, 0.0
    for i, j in _probe_points(sol, probes):
        geo = local_geometry(sol, i, j)
        grid, t, tp = geo.grid, geo.t, geo.tau_prime
        if lift_choice == "coordinate":
            w = np.zeros(grid.shape, dtype=complex)
        elif lift_choice == "log-tangent":
            w = log_tangent_lift(cfg, t)
        else:
            raise ValueError("lift_choice must be 'coordinate' or 'log-tangent'")
        nb = _neighbors(i, j)

        def F(tt):
            p = cfg.problem(tt)
            return np.log(p.mu / np.asarray(p.omega.values))

        F0 = F(t)
        FD = _D([F(sol.t(*k)) for k in nb], dt)
        phi = geo.phi
        vphi = geo.phi_D + w * d_z(phi, grid)
        vF = FD + w * d_z(F0, grid)
        dbar_vz = -tp / (grid.tau - np.conj(grid.tau)) + d_zbar(w, grid)
        flux = d_z(geo.Q_omega + w * geo.g_omega, grid)
        lhs = (d_zzbar(vphi, grid) - d_zz(phi, grid) * dbar_vz - d_z(phi, grid) * d_zzbar(w, grid) + flux) / geo.g
        rhs = lam * vphi + vF + flux / geo.g_omega
        r = np.abs(lhs - rhs)[geo.mask]
        out = max(out, float(np.max(r)))
        scale = max(scale, float(np.max(np.abs(vphi)[geo.mask])))
    return (out, scale) if return_scale else out


# ---------------------------------------------------------------- reports


@dataclass
class CurvatureReport:
    indices: list
    t: list
    c: np.ndarray
    v: np.ndarray
    dbar_v_sq: np.ndarray
    theta_weight: np.ndarray
    theta_pairing: np.ndarray
    min_c: float
    max_c: float
    argmin_c: tuple
    argmax_c: tuple
    min_g: float
    identity_residuals: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "min_c": self.min_c,
            "max_c": self.max_c,
            "argmin_c": list(self.argmin_c),
            "argmax_c": list(self.argmax_c),
            "min_g": self.min_g,
            "sup_dbar_v_sq": float(np.max(self.dbar_v_sq)) if self.dbar_v_sq.size else 0.0,
            "identity_residuals": dict(self.identity_residuals),
            "flags": dict(self.flags),
            "base_samples": [[int(i), int(j)] for i, j in self.indices],
        }

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = []
        p = out / "curvature_report.json"
        p.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        files.append(p)
        for k, (i, j) in enumerate(self.indices):
            for name, arr, kind in (("c", self.c[k], "generic"), ("v", self.v[k], "generic"), ("psi", self.theta_weight[k], "generic")):
                f = out / f"{name}_{i:03d}_{j:03d}.fld1"
                fld1.write_array(f, arr, kind)
                files.append(f)
        return files


def geodesic_curvature(sol: FamilySolution, probes=None, margin: int = BASE_MARGIN, check: bool = True) -> CurvatureReport:
    """Curvature fields at interior base samples; extrema exclude marked-point disks."""
    idx = sol.config.base.interior(margin) if probes is None else [tuple(p) for p in probes]
    cs, vs, dv, psis, ths = [], [], [], [], []
    min_c, max_c, amin, amax, min_g = math.inf, -math.inf, (), (), math.inf
    for i, j in idx:
        geo = local_geometry(sol, i, j)
        if check:
            check_curvature_forms(geo)
        cs.append(geo.c)
        vs.append(geo.w)
        dv.append(np.abs(geo.dbar_v) ** 2)
        psis.append(geo.psi)
        ths.append(geo.theta)
        cm = np.where(geo.mask, geo.c, np.inf)
        k = np.unravel_index(int(np.argmin(cm)), cm.shape)
        if cm[k] < min_c:
            min_c, amin = float(cm[k]), (i, j, int(k[0]), int(k[1]))
        cM = np.where(geo.mask, geo.c, -np.inf)
        k = np.unravel_index(int(np.argmax(cM)), cM.shape)
        if cM[k] > max_c:
            max_c, amax = float(cM[k]), (i, j, int(k[0]), int(k[1]))
        min_g = min(min_g, float(np.min(geo.g)))
    return CurvatureReport(idx, [sol.t(*k) for k in idx], np.array(cs), np.array(vs), np.array(dv), np.array(psis), np.array(ths), min_c, max_c, amin, amax, min_g)


def dbar_v_and_theta(sol: FamilySolution, probes=None) -> CurvatureReport:
    """Same report; dbar_v_sq and the weight fields are filled alongside c."""
    return geodesic_curvature(sol, probes)


def semipositivity_report(sol: FamilySolution, refined: FamilySolution | None = None, probes=None, refined_probes=None) -> CurvatureReport:
    """Form positivity via min c and min g, with an optional refinement sign check."""
    rep = geodesic_curvature(sol, probes)
    rep.flags["positive"] = bool(rep.min_c >= 0 and rep.min_g > 0)
    if refined is not None:
        fine = geodesic_curvature(refined, refined_probes)
        rep.flags["refined_min_c"] = fine.min_c
        rep.flags["sign_stable"] = bool(np.sign(fine.min_c) == np.sign(rep.min_c))
        rep.flags["relative_change"] = abs(fine.min_c - rep.min_c) / max(abs(fine.min_c), 1e-300)
    return rep


def refine_config(cfg: FamilyConfig) -> FamilyConfig:
    """Both resolutions doubled on the same disk (base samples nest: i -> 2i)."""
    b = cfg.base
    return cfg.replace(base=BaseGrid(b.center, b.radius, 2 * b.m_side - 1), n_side=2 * cfg.n_side)


def config_to_dict(cfg: FamilyConfig) -> dict:
    def enc(o):
        if isinstance(o, complex):
            return [o.real, o.imag]
        if isinstance(o, dict):
            return {k: enc(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [enc(v) for v in o]
        return o

    return enc(asdict(cfg))
