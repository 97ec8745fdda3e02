"""Backward HJB solver with a measure-valued source.

Solves, in the discrete analogue of the mild sense,

    d/dt phi + b d/dx phi + a/2 d2/dx2 phi - 1/2 a (d/dx phi)^2
        + c + coupling = -lambda_t psi_t,       phi_T = lambda_T psi_T,

by a backward semi-implicit sweep: the linear drift-diffusion part is
implicit, the quadratic term explicit from the later-time slice (clipped at
``hamiltonian_cap`` with a diagnostic counter), sources added per step.
The endpoint atom at t=0 never enters the sweep; it tilts the initial law.
Homogeneous Neumann boundaries; the induced boundary-layer width is recorded
so diagnostics can restrict to the core sub-domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from entroflow.backend import kernels
from entroflow.errors import BlowUp, DegenerateDensity
from entroflow.fp_solver import DENSITY_FLOOR, MarginalFlow, _kernel_convolution
from entroflow.model import Scenario, SpaceTimeGrid, evaluate_constraint

BLOWUP_CAP = 1e6
HAMILTONIAN_CAP = 1e4


@dataclass(frozen=True)
class Multiplier:
    """Positive measure on [0,T]: atoms at the endpoints plus an interior
    density, one value per time cell."""

    atom0: float
    interior: np.ndarray
    atomT: float

    @classmethod
    def zero(cls, nt: int) -> "Multiplier":
        return cls(0.0, np.zeros(nt), 0.0)

    def __post_init__(self):
        if self.atom0 < 0 or self.atomT < 0 or np.any(np.asarray(self.interior) < 0):
            raise ValueError("multiplier components must be nonnegative")

    def total_mass(self, dt: float) -> float:
        return float(self.atom0 + np.sum(self.interior) * dt + self.atomT)

    def interior_mass(self, dt: float) -> float:
        return float(np.sum(self.interior) * dt)


@dataclass(frozen=True)
class ValueField:
    """Value function with its first two spatial derivatives."""

    phi: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    grid: SpaceTimeGrid
    boundary_layer: int = 0       # cells affected by the Neumann surrogate
    clipped_nodes: int = 0        # Hamiltonian cap hits during the sweep
    sup_grad: float = 0.0

    def core(self) -> slice:
        b = self.boundary_layer
        return slice(b, self.grid.nx - b)


def _derivatives(phi: np.ndarray, dx: float):
    grad = np.gradient(phi, dx, axis=1, edge_order=2)
    hess = np.gradient(grad, dx, axis=1, edge_order=2)
    return grad, hess


def source_terms(s: Scenario, flow: MarginalFlow, lam: Multiplier):
    """Constraint values and centred derivatives along the flow.

    Returns (values[nt+1], psi[nt+1, nx]) where psi[k] is the centred
    linear derivative of Psi at mu_{t_k}; only the gradient drives the
    control, the scalar part Psi - epsilon lives in the slackness checks.
    """
    grid = s.grid
    vals = np.empty(grid.nt + 1)
    psi = np.empty((grid.nt + 1, grid.nx))
    for k, t in enumerate(grid.times):
        vals[k], psi[k] = evaluate_constraint(s.constraint, t, flow.densities[k], grid)
    return vals, psi


def hjb_solve(s: Scenario, flow: MarginalFlow, lam: Multiplier,
              coupling: Optional[np.ndarray] = None,
              hamiltonian_cap: float = HAMILTONIAN_CAP,
              blowup_cap: float = BLOWUP_CAP) -> ValueField:
    """Backward sweep for the value field given flow and multiplier.

    ``coupling`` is the optional mean-field source field on the full grid
    ((nt+1, nx)); zero for drifts without measure dependence.
    """
    grid = s.grid
    nx, nt, dx, dt = grid.nx, grid.nt, grid.dx, grid.dt
    x = grid.cells

    _, psi = source_terms(s, flow, lam)

    phi = np.empty((nt + 1, nx))
    phi[nt] = lam.atomT * psi[nt]
    clipped = 0
    for k in range(nt - 1, -1, -1):
        t = k * dt
        mu_k = flow.densities[k]
        m1 = float(np.dot(mu_k, x)) * dx
        b = s.coeffs.b(t, x, m1)
        if s.coeffs.interaction_kernel is not None:
            b = b - _kernel_convolution(s.coeffs.interaction_kernel, mu_k, x, dx)
        a = s.coeffs.a(t, x)
        src = s.coeffs.cost(t, x) + lam.interior[k] * psi[k]
        if coupling is not None:
            src = src + coupling[k]
        out, nclip = kernels.hjb_step(
            np.ascontiguousarray(phi[k + 1]), np.ascontiguousarray(b),
            np.ascontiguousarray(a), np.ascontiguousarray(src), dt, dx,
            hamiltonian_cap)
        phi[k] = out
        clipped += nclip
        sup = float(np.max(np.abs(phi[k])))
        if sup > blowup_cap:
            raise BlowUp(
                f"sup|phi| = {sup:.3e} at step {k}; multiplier mass too "
                "large or grid too coarse")

    grad, hess = _derivatives(phi, dx)
    a_max = max(float(np.max(s.coeffs.a(t, x))) for t in (0.0, grid.T / 2, grid.T))
    layer = int(np.ceil(6.0 * np.sqrt(a_max * grid.T) / dx))
    layer = min(layer, nx // 2 - 2)
    return ValueField(phi=phi, grad=grad, hess=hess, grid=grid,
                      boundary_layer=max(layer, 0), clipped_nodes=clipped,
                      sup_grad=float(np.max(np.abs(grad))))


@dataclass(frozen=True)
class Control:
    """Feedback control alpha = -sigma dphi/dx and its drift increment."""

    alpha: np.ndarray
    drift_increment: np.ndarray    # -a dphi/dx, what enters the FP drift
    grad: np.ndarray               # dphi/dx, consumed by fp_solve
    sup_alpha: float


def feedback_control(v: ValueField, s: Scenario) -> Control:
    grid = v.grid
    x = grid.cells
    alpha = np.empty_like(v.grad)
    incr = np.empty_like(v.grad)
    for k, t in enumerate(grid.times):
        sig = s.coeffs.sigma(t, x)
        alpha[k] = -sig * v.grad[k]
        incr[k] = -sig * sig * v.grad[k]
    return Control(alpha=alpha, drift_increment=incr, grad=v.grad,
                   sup_alpha=float(np.max(np.abs(alpha))))


def estimate_bounds(v: ValueField) -> dict:
    """sup-norms of the first three x-derivatives on the core sub-domain.

    Third derivative by finite differences of the stored Hessian.  Used to
    confirm uniform boundedness under grid refinement and multiplier-mass
    scaling.
    """
    core = v.core()
    third = np.gradient(v.hess, v.grid.dx, axis=1, edge_order=2)
    return {
        "sup_grad": float(np.max(np.abs(v.grad[:, core]))),
        "sup_hess": float(np.max(np.abs(v.hess[:, core]))),
        "sup_third": float(np.max(np.abs(third[:, core]))),
    }


def relative_entropy(p: np.ndarray, q: np.ndarray, dx: float) -> float:
    """H(p|q) by grid quadrature; densities with matching supports."""
    mask = p > DENSITY_FLOOR
    if np.any(q[mask] <= 0.0):
        raise DegenerateDensity("log of nonpositive density inside the core")
    ratio = p[mask] / q[mask]
    return float(np.dot(p[mask], np.log(ratio))) * dx


def value_functional(s: Scenario, v: ValueField, flow: MarginalFlow,
                     tilted_init: np.ndarray) -> float:
    """H(tilted_init | nu_0) + int_0^T int 1/2 |alpha|^2 dmu dt.

    The flow must have been solved under feedback_control(v); trapezoidal
    quadrature in time, midpoint in space.
    """
    grid = v.grid
    x = grid.cells
    nu0 = s.initial.density(grid)
    h0 = relative_entropy(np.asarray(tilted_init, dtype=float), nu0, grid.dx)
    cost_t = np.empty(grid.nt + 1)
    for k, t in enumerate(grid.times):
        a = s.coeffs.a(t, x)
        cost_t[k] = 0.5 * float(np.dot(a * v.grad[k] ** 2, flow.densities[k])) * grid.dx
    control_cost = float(np.trapezoid(cost_t, dx=grid.dt))
    return h0 + control_cost


def mild_residual(s: Scenario, v: ValueField, flow: MarginalFlow,
                  lam: Multiplier, coupling: Optional[np.ndarray] = None) -> float:
    """Max over t of the L2(mu_t)-norm of the time-integrated equation.

    Substitutes the solved phi into the backward equation integrated from t
    to T (quadrature in time, finite differences in space, core sub-domain
    in x); decreases like O(dx + dt) on the closed-form examples.
    """
    grid = v.grid
    nx, nt, dx, dt = grid.nx, grid.nt, grid.dx, grid.dt
    x = grid.cells
    _, psi = source_terms(s, flow, lam)
    core = v.core()

    integrand = np.empty((nt + 1, nx))
    for k, t in enumerate(grid.times):
        mu_k = flow.densities[k]
        m1 = float(np.dot(mu_k, x)) * dx
        b = s.coeffs.b(t, x, m1)
        if s.coeffs.interaction_kernel is not None:
            b = b - _kernel_convolution(s.coeffs.interaction_kernel, mu_k, x, dx)
        a = s.coeffs.a(t, x)
        lam_k = lam.interior[min(k, nt - 1)]
        integrand[k] = (b * v.grad[k] - 0.5 * a * v.grad[k] ** 2
                        + 0.5 * a * v.hess[k] + s.coeffs.cost(t, x)
                        + lam_k * psi[k])
        if coupling is not None:
            integrand[k] += coupling[k]

    worst = 0.0
    for k in range(nt + 1):
        tail = np.zeros(nx)
        if k < nt:
            tail = np.trapezoid(integrand[k:], dx=dt, axis=0)
        res = -v.phi[k] + tail + lam.atomT * psi[nt]
        mu_k = flow.densities[k]
        norm = np.sqrt(float(np.dot(res[core] ** 2, mu_k[core])) * dx)
        worst = max(worst, norm)
    return worst
