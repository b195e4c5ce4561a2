"""Fiber-level geometry on a flat torus C/(Z + tau Z).

Conventions used everywhere in the package:

* Samples live on a uniform grid in lattice coordinates (x, y); the point is
  z = x + tau*y.  Arrays have shape (n, n) with axis 0 indexing x and axis 1
  indexing y.
* dd^c = i d d-bar.  A real (1,1)-form on the fiber is i*g dz^dzbar and g is
  called its coefficient.  Since i dz^dzbar = 2 dA, a form with coefficient g
  has area density 2g with respect to Lebesgue measure dA.
* Delta = 4 d_z d_zbar is the flat Laplacian, so dd^c phi has coefficient
  Delta(phi)/4 and area density Delta(phi)/2.
* Fields tagged ``density`` and the reference form ``omega`` of a fiber
  problem are stored as area densities (mass = fiber_integral(1, field)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

KINDS = ("potential", "density", "metric-coefficient", "generic")

# theta fallback threshold on Im(tau)
THETA_LEADING_TERM_IM_TAU = 50.0
THETA_REL_TOL = 1e-16


@dataclass(frozen=True)
class TorusGrid:
    """Uniform n_side x n_side sampling of the torus C/(Z + tau Z)."""

    tau: complex
    n_side: int

    def __post_init__(self):
        tau = complex(self.tau)
        object.__setattr__(self, "tau", tau)
        if not tau.imag > 0:
            raise ValueError(f"Im(tau) must be positive, got tau={tau}")
        n = int(self.n_side)
        if n < 16 or n & (n - 1):
            raise ValueError(f"n_side must be a power of two >= 16, got {self.n_side}")
        object.__setattr__(self, "n_side", n)

    @property
    def im_tau(self) -> float:
        return self.tau.imag

    @property
    def cell_area(self) -> float:
        return self.tau.imag / self.n_side**2

    @property
    def area(self) -> float:
        return self.tau.imag

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_side, self.n_side)

    def lattice_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (x, y) arrays of lattice coordinates in [0, 1)."""
        return _lattice_coords(self.n_side)

    def points(self) -> np.ndarray:
        x, y = self.lattice_coords()
        return x + self.tau * y

    def to_lattice(self, z: complex) -> tuple[float, float]:
        z = complex(z)
        y = z.imag / self.tau.imag
        x = z.real - self.tau.real * y
        return x, y

    def lattice_distance(self, a: complex) -> np.ndarray:
        """Periodic distance in lattice units from every sample to the point a."""
        xa, ya = self.to_lattice(a)
        x, y = self.lattice_coords()
        dx = (x - xa + 0.5) % 1.0 - 0.5
        dy = (y - ya + 0.5) % 1.0 - 0.5
        return np.hypot(dx, dy)


@lru_cache(maxsize=16)
def _lattice_coords(n: int):
    s = np.arange(n) / n
    x, y = np.meshgrid(s, s, indexing="ij")
    x.setflags(write=False)
    y.setflags(write=False)
    return x, y


@dataclass(frozen=True)
class Field:
    """Periodic sample array on a TorusGrid."""

    grid: TorusGrid
    values: np.ndarray
    kind: str = "generic"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        v = np.array(self.values, copy=True)
        if v.ndim == 1 and v.size == self.grid.n_side**2:
            v = v.reshape(self.grid.shape)
        if v.shape != self.grid.shape:
            raise ValueError(f"field has shape {v.shape}, grid wants {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite samples")
        if self.kind in ("potential", "density"):
            if np.iscomplexobj(v):
                if np.any(v.imag != 0):
                    raise ValueError(f"{self.kind} field must be real")
                v = v.real.copy()
            if self.kind == "density" and np.any(v < 0):
                raise ValueError("density field must be nonnegative")
        if not np.iscomplexobj(v):
            v = v.astype(np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mean(self) -> float:
        return float(np.mean(self.values).real)

    def with_values(self, values, kind: str | None = None) -> "Field":
        return Field(self.grid, values, self.kind if kind is None else kind)


def constant_field(grid: TorusGrid, value: float = 1.0, kind: str = "generic") -> Field:
    return Field(grid, np.full(grid.shape, float(value)), kind)


# ---------------------------------------------------------------- spectral calculus


def _flip(a: np.ndarray) -> np.ndarray:
    """a evaluated at the negated frequency index."""
    return np.roll(a[::-1, ::-1], 1, axis=(0, 1))


@lru_cache(maxsize=64)
def _symbols(tau: complex, n: int):
    k = np.fft.fftfreq(n, 1.0 / n)
    K, L = np.meshgrid(k, k, indexing="ij")
    tb = np.conj(tau)
    lap = -4 * np.pi**2 * np.abs(K * tau - L) ** 2 / tau.imag**2
    # at the Nyquist row/column the mode (k, l) aliases the conjugate partner of
    # (k, -l); averaging makes the symbol map real fields to real fields
    lap = 0.5 * (lap + _flip(lap))
    # first derivatives: drop the Nyquist row/column so real inputs stay consistent
    nyq = (np.abs(K) == n // 2) | (np.abs(L) == n // 2)
    dz = 2j * np.pi * (tb * K - L) / (tb - tau)
    dzb = 2j * np.pi * (L - tau * K) / (tb - tau)
    dz[nyq] = 0
    dzb[nyq] = 0
    inv = np.zeros_like(lap)
    nz = lap != 0
    inv[nz] = 1.0 / lap[nz]
    for a in (lap, dz, dzb, inv):
        a.setflags(write=False)
    return lap, dz, dzb, inv


def _apply(values: np.ndarray, grid: TorusGrid, symbol: np.ndarray, real_out: bool) -> np.ndarray:
    out = np.fft.ifft2(np.fft.fft2(values) * symbol)
    if real_out and not np.iscomplexobj(values):
        return out.real
    return out


def d_z(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Spectral d/dz of a periodic array."""
    return _apply(values, grid, _symbols(grid.tau, grid.n_side)[1], False)


def d_zbar(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Spectral d/dzbar of a periodic array."""
    return _apply(values, grid, _symbols(grid.tau, grid.n_side)[2], False)


def d_zz(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    dz = _symbols(grid.tau, grid.n_side)[1]
    return _apply(values, grid, dz * dz, False)


def d_zzbar(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """d_z d_zbar = Delta/4, real for real input."""
    return _apply(values, grid, _symbols(grid.tau, grid.n_side)[0] / 4.0, True)


def laplacian(f: Field) -> Field:
    """Flat Laplacian 4 d_z d_zbar of the metric |dz|^2."""
    if f.kind not in ("potential", "generic", "metric-coefficient"):
        raise ValueError(f"laplacian expects a potential or generic field, got {f.kind}")
    lap = _symbols(f.grid.tau, f.grid.n_side)[0]
    out = _apply(f.values, f.grid, lap, True)
    return Field(f.grid, out, "generic")


def poisson_solve(g: Field, tol: float = 1e-10) -> Field:
    """Zero-mean solution phi of Delta phi = g."""
    v = g.values
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    m = np.mean(v)
    if abs(m) > tol * scale:
        raise ValueError(f"incompatible source: mean {abs(m):.3e} exceeds {tol:g}*sup|g|")
    inv = _symbols(g.grid.tau, g.grid.n_side)[3]
    out = _apply(v, g.grid, inv, True)
    kind = "potential" if not np.iscomplexobj(out) else "generic"
    return Field(g.grid, out, kind)


# ---------------------------------------------------------------- theta section norms


def _theta_terms(im_tau: float) -> int:
    """Number of series terms for theta_1 on the reduced strip |Im w| <= pi*Im(tau)/2."""
    # term n relative to the leading one is bounded by exp(-pi*s*(n^2 + n - n)) = exp(-pi*s*n^2)
    n = 1
    while math.exp(-math.pi * im_tau * n * n) >= THETA_REL_TOL:
        n += 1
    return n


def _reduce(d: np.ndarray, tau: complex) -> np.ndarray:
    """Translate z - a by lattice vectors so its lattice coordinates lie in [-1/2, 1/2)."""
    s = tau.imag
    y = d.imag / s
    x = d.real - tau.real * y
    ky = np.floor(y + 0.5)
    kx = np.floor(x + 0.5)
    return d - kx - ky * tau


def theta1(w: np.ndarray, tau: complex, n_terms: int | None = None) -> np.ndarray:
    """Jacobi theta_1(w | tau) = 2 sum (-1)^n q^{(n+1/2)^2} sin((2n+1)w), q = exp(i pi tau)."""
    w = np.asarray(w, dtype=complex)
    if n_terms is None:
        n_terms = _theta_terms(tau.imag)
    out = np.zeros_like(w)
    for n in range(n_terms):
        coef = 2 * (-1) ** n * np.exp(1j * np.pi * tau * (n + 0.5) ** 2)
        out = out + coef * np.sin((2 * n + 1) * w)
    return out


def theta_norm_values(a: complex, tau: complex, z: np.ndarray) -> np.ndarray:
    """h_a(z) = |theta_1(pi(z-a))|^2 exp(-2 pi Im(z-a)^2 / Im tau), evaluated pointwise."""
    tau = complex(tau)
    if not tau.imag > 0:
        raise ValueError("Im(tau) must be positive")
    d = _reduce(np.asarray(z, dtype=complex) - complex(a), tau)
    s = tau.imag
    gauss = np.exp(-2 * np.pi * d.imag**2 / s)
    if s > THETA_LEADING_TERM_IM_TAU:
        # leading term only; the dropped terms are below exp(-2 pi s) relative
        lead = 4 * np.exp(-np.pi * s / 2) * np.abs(np.sin(np.pi * d)) ** 2
        return lead * gauss
    th = theta1(np.pi * d, tau)
    return np.abs(th) ** 2 * gauss


def theta_section_norm(a: complex, grid: TorusGrid) -> Field:
    """Flat-metric squared norm of the canonical section vanishing at a."""
    vals = theta_norm_values(a, grid.tau, grid.points())
    return Field(grid, vals, "generic")


def theta_norm_leading_coefficient(tau: complex) -> float:
    """lim h_a(z)/|z-a|^2 = pi^2 |theta_1'(0)|^2."""
    tau = complex(tau)
    n_terms = _theta_terms(tau.imag)
    d1 = sum(2 * (-1) ** n * np.exp(1j * np.pi * tau * (n + 0.5) ** 2) * (2 * n + 1) for n in range(n_terms))
    return float(np.pi**2 * abs(d1) ** 2)


# ---------------------------------------------------------------- divisors and densities


@dataclass(frozen=True)
class MarkedDivisor:
    """Marked points E (zeros, exponent e >= 0) and B (poles, exponent b in [0, 1))."""

    points_E: tuple = ()
    points_B: tuple = ()

    def __post_init__(self):
        pe = tuple((complex(a), float(e)) for a, e in self.points_E)
        pb = tuple((complex(a), float(b)) for a, b in self.points_B)
        for _, e in pe:
            if e < 0:
                raise ValueError(f"E exponent must be >= 0, got {e}")
        for _, b in pb:
            if not 0 <= b < 1:
                raise ValueError(f"B exponent must lie in [0, 1), got {b}")
        object.__setattr__(self, "points_E", pe)
        object.__setattr__(self, "points_B", pb)

    def all_points(self) -> list[complex]:
        return [a for a, _ in self.points_E] + [a for a, _ in self.points_B]

    def check_distinct(self, tau: complex) -> None:
        pts = self.all_points()
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d = _reduce(np.array([pts[i] - pts[j]]), complex(tau))[0]
                if abs(d) < 1e-12:
                    raise ValueError("marked points must be distinct modulo the lattice")

    @property
    def is_empty(self) -> bool:
        return not self.points_E and not self.points_B


@dataclass(frozen=True)
class RegularizedDensity:
    """background * prod (eps^2 xi + h_E)^q / prod (eps^2 xi + h_B)^b.

    ``reg_weight`` is the optional smooth positive factor xi multiplying eps^2;
    it models a different choice of hermitian metric on the point bundles and
    defaults to 1.  ``q`` defaults to the E exponents.
    """

    divisor: MarkedDivisor
    epsilon: float = 0.0
    q: tuple | None = None
    background: Field | None = None
    reg_weight: Field | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.q is not None:
            q = tuple(float(x) for x in self.q)
            if len(q) != len(self.divisor.points_E):
                raise ValueError("q must have one weight per E point")
            object.__setattr__(self, "q", q)
        if self.background is not None and np.any(np.asarray(self.background.values).real <= 0):
            raise ValueError("background must be strictly positive")

    @property
    def weights(self) -> tuple:
        return self.q if self.q is not None else tuple(e for _, e in self.divisor.points_E)

    def scaled_q(self, p: float) -> "RegularizedDensity":
        """Density with E weights (1 - p/2) q, the right-hand measure of the weighted inequalities."""
        q = tuple((1 - p / 2) * w for w in self.weights)
        return RegularizedDensity(self.divisor, self.epsilon, q, self.background, self.reg_weight)

    def with_q(self, q) -> "RegularizedDensity":
        return RegularizedDensity(self.divisor, self.epsilon, tuple(q), self.background, self.reg_weight)

    def with_epsilon(self, eps: float) -> "RegularizedDensity":
        return RegularizedDensity(self.divisor, eps, self.q, self.background, self.reg_weight)

    def with_background(self, bg: Field | None) -> "RegularizedDensity":
        return RegularizedDensity(self.divisor, self.epsilon, self.q, bg, self.reg_weight)


def evaluate_density(d: RegularizedDensity, grid: TorusGrid) -> Field:
    """Sample the regularized density on the grid."""
    eps2 = d.epsilon**2
    if d.epsilon == 0 and any(b >= 1 for _, b in d.divisor.points_B):
        raise ValueError("non-integrable cone: epsilon = 0 with a B exponent >= 1")
    d.divisor.check_distinct(grid.tau)
    out = np.ones(grid.shape)
    if d.background is not None:
        if d.background.grid.shape != grid.shape:
            raise ValueError("background lives on a different grid")
        out = out * np.asarray(d.background.values).real
    xi = 1.0 if d.reg_weight is None else np.asarray(d.reg_weight.values).real
    pts = grid.points()
    for (a, _), q in zip(d.divisor.points_E, d.weights):
        if q != 0:
            out = out * (eps2 * xi + theta_norm_values(a, grid.tau, pts)) ** q
    for a, b in d.divisor.points_B:
        if b != 0:
            with np.errstate(divide="ignore"):  # caught by the finiteness check below
                out = out / (eps2 * xi + theta_norm_values(a, grid.tau, pts)) ** b
    if not np.all(np.isfinite(out)):
        raise ValueError("density is not finite on the grid (a marked point sits on a sample)")
    return Field(grid, out, "density")


def fiber_integral(f: Field, weight: Field | None = None) -> float:
    """Periodic trapezoid rule: sum f*weight*cell_area."""
    fv = np.asarray(f.values)
    if weight is not None:
        if weight.grid.shape != f.grid.shape:
            raise ValueError("shape mismatch between integrand and weight")
        fv = fv * np.asarray(weight.values)
    total = np.sum(fv) * f.grid.cell_area
    if np.iscomplexobj(total):
        return complex(total)
    return float(total)


def normalization_constant(d: RegularizedDensity, grid: TorusGrid) -> float:
    """C with exp(-C) equal to the total mass of the density."""
    mass = fiber_integral(evaluate_density(d, grid))
    if not np.isfinite(mass) or mass <= 0:
        raise ValueError(f"density mass is not a positive finite number: {mass}")
    return -math.log(mass)


def normalized(d: RegularizedDensity, grid: TorusGrid) -> RegularizedDensity:
    """Same density with the background rescaled to total mass 1."""
    c = normalization_constant(d, grid)
    bg = np.ones(grid.shape) if d.background is None else np.asarray(d.background.values).real
    return d.with_background(Field(grid, bg * math.exp(c), "generic"))


def fourier_mode(grid: TorusGrid, k: int, l: int, phase: float = 0.0) -> np.ndarray:
    x, y = grid.lattice_coords()
    return np.cos(2 * np.pi * (k * x + l * y) + phase)
