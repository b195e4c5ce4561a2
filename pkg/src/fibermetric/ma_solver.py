"""Fiberwise Monge-Ampere solves on one torus (complex dimension one).

All fields are area densities, see ``fiber_core``.  With omega the reference
density and m the sampled density, the equations are

    omega + Delta(phi)/2 = exp(C) m                 (Ricci-flat, linear)
    omega + Delta(phi)/2 = exp(lam_eff * phi) m     (twisted, semilinear)

where exp(-C) is the mass of m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft
from scipy.sparse.linalg import LinearOperator, cg

from .fiber_core import (
    Field,
    RegularizedDensity,
    TorusGrid,
    _symbols,
    evaluate_density,
    fiber_integral,
    poisson_solve,
)

NORMALIZATIONS = ("omega-mean-zero", "density-mean-zero")

NEWTON_MAX_ITERS = 50
NEWTON_TOL = 1e-10
DAMPING_FLOOR = 2.0**-20


class SolverError(RuntimeError):
    """Raised when a fiber solve fails; carries the last residual when known."""

    def __init__(self, msg, residual: float | None = None):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class FiberProblem:
    grid: TorusGrid
    omega: Field
    density: RegularizedDensity
    lam: float = 0.0
    epsilon_twist: float = 0.0
    normalization: str = "omega-mean-zero"

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.lam < 0 or self.epsilon_twist < 0:
            raise ValueError("lambda and epsilon_twist must be >= 0")
        w = np.asarray(self.omega.values)
        if np.iscomplexobj(w) or np.any(w <= 0):
            raise ValueError("omega must be real and strictly positive")
        mass = fiber_integral(self.omega)
        if abs(mass - 1.0) > 1e-10:
            raise ValueError(f"omega must have fiber mass 1, got {mass!r}")

    @property
    def lam_eff(self) -> float:
        return self.lam + self.epsilon_twist

    @cached_property
    def mu(self) -> np.ndarray:
        return np.asarray(evaluate_density(self.density, self.grid).values)

    @cached_property
    def log_mass(self) -> float:
        return math.log(float(np.sum(self.mu)) * self.grid.cell_area)


@dataclass(frozen=True)
class FiberSolution:
    phi: Field
    residual_inf: float
    newton_iters: int = 0
    normalization_value: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)


def _half_lap(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    lap = _symbols(grid.tau, grid.n_side)[0]
    return np.fft.ifft2(np.fft.fft2(values) * lap).real / 2.0


def metric_density(p: FiberProblem, phi: np.ndarray) -> np.ndarray:
    """Area density of omega + dd^c phi."""
    return np.asarray(p.omega.values) + _half_lap(phi, p.grid)


def _normalize(p: FiberProblem, phi: np.ndarray) -> tuple[np.ndarray, float]:
    if p.normalization == "omega-mean-zero":
        w = np.asarray(p.omega.values)
    else:
        w = p.mu
    shift = float(np.sum(phi * w) / np.sum(w))
    return phi - shift, shift


def _check_positive(p: FiberProblem, phi: np.ndarray, what: str) -> None:
    dens = metric_density(p, phi)
    bad = np.argwhere(~(dens > 0))
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise SolverError(f"{what}: degenerate metric at sample ({i}, {j})")


def solve_ricci_flat(p: FiberProblem) -> FiberSolution:
    """Linear solve of omega + dd^c phi = e^C mu, normalized per the problem tag."""
    if p.lam_eff != 0:
        raise ValueError("solve_ricci_flat needs lambda = epsilon_twist = 0")
    w = np.asarray(p.omega.values)
    target = p.mu * math.exp(-p.log_mass)
    src = 2.0 * (target - w)
    # both masses are 1 up to 1e-10; remove the round-off mean before the solve
    src = src - np.mean(src)
    phi = np.asarray(poisson_solve(Field(p.grid, src, "generic")).values)
    phi, shift = _normalize(p, phi)
    _check_positive(p, phi, "ricci-flat solve")
    sol = Field(p.grid, phi, "potential")
    res = float(np.max(np.abs(metric_density(p, phi) - target)))
    return FiberSolution(sol, res, 0, shift)


def _newton_operator(p: FiberProblem, a: np.ndarray):
    n = p.grid.n_side
    lap = _symbols(p.grid.tau, n)[0]
    abar = float(np.mean(a))
    pre = -lap / 2.0 + abar
    pre[0, 0] = pre[0, 0] if pre[0, 0] > 0 else 1.0

    def mv(x):
        x = x.reshape(n, n)
        return (-_half_lap(x, p.grid) + a * x).ravel()

    def prec(x):
        x = x.reshape(n, n)
        return np.fft.ifft2(np.fft.fft2(x) / pre).real.ravel()

    A = LinearOperator((n * n, n * n), matvec=mv, dtype=float)
    M = LinearOperator((n * n, n * n), matvec=prec, dtype=float)
    return A, M


def solve_semilinear(p: FiberProblem, phi0: np.ndarray | float | None = None) -> FiberSolution:
    """Damped Newton for omega + dd^c phi = exp(lam_eff phi) mu.

    Each Newton system (-Delta/2 + lam e^{lam phi} mu) delta = G is symmetric
    positive definite and is solved by conjugate gradients preconditioned
    with the constant-coefficient spectral inverse.
    """
    lam = p.lam_eff
    if not lam > 0:
        raise ValueError("solve_semilinear needs lambda + epsilon_twist > 0")
    w = np.asarray(p.omega.values)
    mu = p.mu
    tol = NEWTON_TOL * float(np.max(mu))
    phi = np.zeros(p.grid.shape) if phi0 is None else np.broadcast_to(np.asarray(phi0, float), p.grid.shape).copy()
    _check_positive(p, phi, "initial guess")
    res = math.inf
    for it in range(NEWTON_MAX_ITERS + 1):
        e = np.exp(lam * phi) * mu
        G = w + _half_lap(phi, p.grid) - e
        res = float(np.max(np.abs(G)))
        if res <= tol:
            return FiberSolution(Field(p.grid, phi, "potential"), res, it, 0.0)
        if it == NEWTON_MAX_ITERS:
            break
        A, M = _newton_operator(p, lam * e)
        delta, info = cg(A, G.ravel(), rtol=1e-13, atol=0.0, maxiter=2000, M=M)
        delta = delta.reshape(p.grid.shape)
        step = 1.0
        while True:
            trial = phi + step * delta
            if np.all(metric_density(p, trial) > 0):
                break
            step /= 2
            if step < DAMPING_FLOOR:
                raise SolverError("damping floor reached while keeping the metric positive", res)
        phi = trial
    raise SolverError(f"Newton did not converge in {NEWTON_MAX_ITERS} iterations", res)


def solve(p: FiberProblem, phi0=None) -> FiberSolution:
    if p.lam_eff > 0:
        return solve_semilinear(p, phi0)
    return solve_ricci_flat(p)


def _laplacian_real_coords(phi: np.ndarray, grid: TorusGrid) -> np.ndarray:
    # Delta = (|tau|^2 d_xx - 2 Re(tau) d_xy + d_yy) / Im(tau)^2 in lattice coordinates
    n = grid.n_side
    k = scipy.fft.fftfreq(n, 1.0 / n) * 2 * np.pi
    kx = k[:, None]
    ky = k[None, :]
    t = grid.tau
    sym = -(abs(t) ** 2 * kx**2 - 2 * t.real * kx * ky + ky**2) / t.imag**2
    sym = 0.5 * (sym + np.roll(sym[::-1, ::-1], 1, axis=(0, 1)))
    return scipy.fft.ifftn(scipy.fft.fftn(phi) * sym).real


def verify_solution(p: FiberProblem, s: FiberSolution) -> float:
    """Sup-norm equation residual, recomputed through an independent transform path."""
    phi = np.asarray(s.phi.values)
    lhs = np.asarray(p.omega.values) + _laplacian_real_coords(phi, p.grid) / 2.0
    mu = evaluate_density(p.density, p.grid).values
    if p.lam_eff > 0:
        rhs = np.exp(p.lam_eff * phi) * mu
    else:
        rhs = mu / (math.fsum(np.ravel(mu)) * p.grid.cell_area)
    return float(np.max(np.abs(lhs - rhs)))
