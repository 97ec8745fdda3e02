"""Scenario data model: grids, coefficients, constraints, initial laws.

A Scenario bundles everything a solve needs.  All types are immutable after
construction and evaluation methods are pure, so scenarios can be shared
freely across threads.  Space is the truncated interval [x_min, x_max] with
no-flux boundaries standing in for the whole line; the initial-law decay
check guards against truncation bias.

Quadrature convention: midpoint rule on cell centers, weight dx everywhere,
so Fokker-Planck mass and constraint integrals agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from entroflow.errors import NotNormalized

MASS_TOL = 1e-6
DECAY_FACTOR = 1e-8
QUAL_FLOOR = 1e-6


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform cell-centered grid on [x_min, x_max] x [0, T]."""

    x_min: float
    x_max: float
    nx: int
    T: float
    nt: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.nx < 8 or self.nt < 8:
            raise ValueError("solver minimum resolution is nx >= 8, nt >= 8")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def cells(self) -> np.ndarray:
        """Cell centers, shape (nx,)."""
        return self.x_min + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        """Cell faces, shape (nx+1,)."""
        return self.x_min + np.arange(self.nx + 1) * self.dx

    @property
    def times(self) -> np.ndarray:
        """Time slices, shape (nt+1,)."""
        return np.arange(self.nt + 1) * self.dt

    def integrate(self, values: np.ndarray):
        """Midpoint quadrature of a cell-centered field (last axis = x)."""
        return np.asarray(values, dtype=float).sum(axis=-1) * self.dx


def _fd_gradient(values: np.ndarray, dx: float) -> np.ndarray:
    return np.gradient(values, dx, edge_order=2)


@dataclass(frozen=True)
class Coefficients:
    """Drift, diffusion and running cost of the reference dynamics.

    ``drift(t, x, m1)`` may depend on the flow's first moment m1 (the mean
    field); scenarios with a genuinely measure-dependent drift also set
    ``interaction_kernel`` = grad W, contributing -grad W * mu to the drift.
    ``diffusion(t, x)`` is sigma, uniformly elliptic.  Analytic x-derivatives
    are optional; centered differences on the grid fill in when absent.
    """

    drift: Callable
    diffusion: Callable
    running_cost: Callable = lambda t, x: np.zeros_like(x)
    interaction_kernel: Optional[Callable] = None
    drift_x_derivative: Optional[Callable] = None
    diffusion_x_derivative: Optional[Callable] = None

    def sigma(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.diffusion(t, x), dtype=float), x.shape).copy()

    def a(self, t: float, x: np.ndarray) -> np.ndarray:
        """sigma sigma^T (scalar sigma^2 in one dimension)."""
        s = self.sigma(t, x)
        return s * s

    def b(self, t: float, x: np.ndarray, m1: float = 0.0) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.drift(t, x, m1), dtype=float), x.shape).copy()

    def a_x(self, t: float, x: np.ndarray, dx: float) -> np.ndarray:
        """d/dx of sigma^2, analytic when provided else centered differences."""
        if self.diffusion_x_derivative is not None:
            return 2.0 * self.sigma(t, x) * np.broadcast_to(
                np.asarray(self.diffusion_x_derivative(t, x), dtype=float), x.shape)
        return _fd_gradient(self.a(t, x), dx)

    def b_x(self, t: float, x: np.ndarray, dx: float, m1: float = 0.0) -> np.ndarray:
        if self.drift_x_derivative is not None:
            return np.broadcast_to(
                np.asarray(self.drift_x_derivative(t, x, m1), dtype=float), x.shape).copy()
        return _fd_gradient(self.b(t, x, m1), dx)

    def cost(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.running_cost(t, x), dtype=float), x.shape).copy()


@dataclass(frozen=True)
class ConstraintFunctional:
    """Running constraint Psi(mu_t) <= epsilon with a linear derivative.

    kind 'linear':           Psi(mu) = int psi_t dmu - offset
    kind 'convex_of_mean':   Psi(mu) = g(int psi_t dmu) - offset
    The linear derivative is centred so that its mu-integral vanishes.
    """

    kind: str
    psi: Callable
    offset: float = 0.0
    psi_dx: Optional[Callable] = None
    psi_dxx: Optional[Callable] = None
    outer: Optional[Callable] = None
    outer_prime: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in ("linear", "convex_of_mean"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "convex_of_mean" and self.outer is None:
            raise ValueError("convex_of_mean requires the outer function g")

    def psi_values(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.psi(t, x), dtype=float), x.shape).copy()

    def psi_grad(self, t: float, x: np.ndarray, dx: float) -> np.ndarray:
        if self.psi_dx is not None:
            return np.broadcast_to(np.asarray(self.psi_dx(t, x), dtype=float), x.shape).copy()
        return _fd_gradient(self.psi_values(t, x), dx)

    def psi_hess(self, t: float, x: np.ndarray, dx: float) -> np.ndarray:
        if self.psi_dxx is not None:
            return np.broadcast_to(np.asarray(self.psi_dxx(t, x), dtype=float), x.shape).copy()
        return _fd_gradient(self.psi_grad(t, x, dx), dx)

    def g_prime(self, m: float) -> float:
        if self.outer_prime is not None:
            return float(self.outer_prime(m))
        h = 1e-5 * max(1.0, abs(m))
        return float(self.outer(m + h) - self.outer(m - h)) / (2.0 * h)


def evaluate_constraint(constraint: ConstraintFunctional, t: float,
                        mu: np.ndarray, grid: SpaceTimeGrid):
    """Return (Psi(mu_t), centred linear derivative on the x-grid).

    The derivative is centred against the *actual* grid mass so that
    sum(derivative * mu) * dx vanishes to roundoff even when the mass is
    only within 1e-6 of 1.
    """
    mu = np.asarray(mu, dtype=float)
    mass = float(np.sum(mu)) * grid.dx
    if not np.isfinite(mass) or abs(mass - 1.0) > MASS_TOL or np.any(mu < -1e-12):
        raise NotNormalized(f"density mass {mass!r} outside 1 +/- {MASS_TOL}")
    x = grid.cells
    psi = constraint.psi_values(t, x)
    mean_psi = float(np.dot(psi, mu)) * grid.dx / mass
    if constraint.kind == "linear":
        value = mean_psi - constraint.offset
        derivative = psi - mean_psi
    else:
        value = float(constraint.outer(mean_psi)) - constraint.offset
        derivative = constraint.g_prime(mean_psi) * (psi - mean_psi)
    return value, derivative


def constraint_gradient(constraint: ConstraintFunctional, t: float,
                        mu: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """Spatial gradient of the centred linear derivative along the flow."""
    x = grid.cells
    grad = constraint.psi_grad(t, x, grid.dx)
    if constraint.kind == "convex_of_mean":
        mass = float(np.sum(mu)) * grid.dx
        mean_psi = float(np.dot(constraint.psi_values(t, x), mu)) * grid.dx / mass
        grad = constraint.g_prime(mean_psi) * grad
    return grad


@dataclass(frozen=True)
class InitialLaw:
    """Initial density, Gaussian or tabulated on the space grid."""

    kind: str = "gaussian"
    mean: float = 0.0
    variance: float = 1.0
    table: Optional[Sequence[float]] = None

    def density(self, grid: SpaceTimeGrid) -> np.ndarray:
        if self.kind == "gaussian":
            if self.variance <= 0:
                raise ValueError("variance must be positive")
            x = grid.cells
            vals = np.exp(-0.5 * (x - self.mean) ** 2 / self.variance)
        elif self.kind == "table":
            vals = np.asarray(self.table, dtype=float)
            if vals.shape != (grid.nx,):
                raise ValueError("tabulated density must have nx entries")
            if np.any(vals < 0):
                raise ValueError("tabulated density must be nonnegative")
        else:
            raise ValueError(f"unknown initial-law kind {self.kind!r}")
        return vals / (np.sum(vals) * grid.dx)


@dataclass(frozen=True)
class Scenario:
    """Full problem data for one constrained solve."""

    grid: SpaceTimeGrid
    coeffs: Coefficients
    constraint: ConstraintFunctional
    initial: InitialLaw
    epsilon: float = 0.0
    mckean_vlasov: bool = False
    lipschitz_bound: float = 100.0
    name: str = "scenario"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    message: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def __str__(self):
        return "\n".join(
            f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.message}" for c in self.checks)


def _max_slope(values: np.ndarray, dx: float) -> float:
    return float(np.max(np.abs(np.diff(values)))) / dx if len(values) > 1 else 0.0


def validate_scenario(s: Scenario) -> ValidationReport:
    """Run every scenario invariant and collect pass/fail checks.

    Pure: the same Scenario always yields an identical report.  Nothing is
    raised; failures are carried in the report.
    """
    checks = []
    grid = s.grid
    x = grid.cells
    t_samples = np.linspace(0.0, grid.T, 9)

    sig_min, sig_max = np.inf, -np.inf
    sig_slope = 0.0
    b_slope = 0.0
    m1_0 = float(np.dot(x, s.initial.density(grid))) * grid.dx
    for t in t_samples:
        sig = s.coeffs.sigma(t, x)
        sig_min = min(sig_min, float(np.min(sig)))
        sig_max = max(sig_max, float(np.max(sig)))
        sig_slope = max(sig_slope, _max_slope(sig, grid.dx))
        b_slope = max(b_slope, _max_slope(s.coeffs.b(t, x, m1_0), grid.dx))

    checks.append(ValidationCheck(
        "ellipticity", sig_min > 1e-8 and np.isfinite(sig_max),
        f"sigma in [{sig_min:.3g}, {sig_max:.3g}]"))
    checks.append(ValidationCheck(
        "drift_lipschitz", b_slope <= s.lipschitz_bound,
        f"max finite-difference slope {b_slope:.3g} (bound {s.lipschitz_bound:g})"))
    checks.append(ValidationCheck(
        "diffusion_lipschitz", sig_slope <= s.lipschitz_bound,
        f"max finite-difference slope {sig_slope:.3g} (bound {s.lipschitz_bound:g})"))

    try:
        dens = s.initial.density(grid)
        interior_pos = bool(np.all(dens[1:-1] > 0.0))
        checks.append(ValidationCheck(
            "initial_positivity", interior_pos,
            "strictly positive on the grid interior" if interior_pos
            else "nonpositive interior density value"))
        peak = float(np.max(dens))
        edge = max(float(dens[0]), float(dens[-1]))
        decay_ok = edge < DECAY_FACTOR * peak
        checks.append(ValidationCheck(
            "initial_decay", decay_ok,
            f"boundary/peak density ratio {edge / peak:.3g} "
            f"(needs < {DECAY_FACTOR:g})"))
    except ValueError as exc:
        checks.append(ValidationCheck("initial_density", False, str(exc)))
        dens = None

    grad_slope = 0.0
    if dens is not None:
        for t in t_samples:
            grad_slope = max(grad_slope, _max_slope(
                constraint_gradient(s.constraint, t, dens, grid), grid.dx))
    checks.append(ValidationCheck(
        "constraint_derivative_lipschitz", grad_slope <= s.lipschitz_bound,
        f"max slope of d/dx dPsi/dmu is {grad_slope:.3g}"))

    if s.constraint.kind == "convex_of_mean":
        ms = np.linspace(-50.0, 50.0, 201)
        g = np.array([float(s.constraint.outer(m)) for m in ms])
        second = np.diff(g, 2)
        convex = bool(np.all(second >= -1e-8 * np.maximum(1.0, np.abs(g[1:-1]))))
        checks.append(ValidationCheck(
            "outer_convexity", convex,
            "g convex on the sampled line" if convex else "sampled g'' < 0"))

    checks.append(ValidationCheck(
        "epsilon_nonnegative", s.epsilon >= 0.0, f"epsilon = {s.epsilon:g}"))
    return ValidationReport(tuple(checks))


def qualification_check(s: Scenario, flow, tol_active: float = 1e-3,
                        qual_floor: float = QUAL_FLOOR):
    """Non-degeneracy of the constraint gradient at active times.

    At each time with Psi(mu_t) >= epsilon - tol_active, require
    int |d/dx dPsi/dmu|^2 dmu_t > qual_floor.  This is the analytic form of
    the qualification condition, equivalent to the measure-theoretic one in
    the regular setting; outside it the check is a heuristic and callers
    should treat a failure as a warning.

    Returns (per-time boolean array over slices, overall pass).
    """
    grid = s.grid
    ok = np.ones(grid.nt + 1, dtype=bool)
    for k, t in enumerate(grid.times):
        mu = flow.densities[k]
        value, _ = evaluate_constraint(s.constraint, t, mu, grid)
        if value >= s.epsilon - tol_active:
            grad = constraint_gradient(s.constraint, t, mu, grid)
            energy = float(np.dot(grad * grad, mu)) * grid.dx
            ok[k] = energy > qual_floor
    return ok, bool(np.all(ok))
