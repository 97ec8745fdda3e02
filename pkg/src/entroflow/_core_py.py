"""Numpy/scipy fallback for the compiled kernels in ``_core``.

Same entry points and semantics as the Cython module.  The tridiagonal
solves go through LAPACK (``scipy.linalg.solve_banded``), so results may
differ from the compiled backend at machine-epsilon level; both backends
are individually deterministic.
"""

import numpy as np
from scipy.linalg import solve_banded


def bernoulli(w):
    """Exponential-fitting weight B(w) = w / (e^w - 1)."""
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < 1e-8
    safe = np.where(small, 1.0, w)
    out = np.where(small, 1.0 - 0.5 * w + w * w / 12.0, safe / np.expm1(safe))
    return out if out.ndim else float(out)


def thomas(lower, diag, upper, rhs):
    """Tridiagonal solve; lower[0] and upper[-1] are ignored."""
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs)


def fp_substep(mu, ut_face, d_face, dt, dx):
    """One conservative drift-diffusion substep with no-flux boundaries.

    Exponentially fitted advective flux applied explicitly, centered
    diffusion implicitly; see the compiled twin for details.
    """
    n = mu.shape[0]
    r = dt / dx
    q = dt / (dx * dx)

    w = ut_face[1:n] * dx / d_face[1:n]
    bp = bernoulli(w)
    bm = bp + w
    fadv = np.zeros(n + 1)
    fadv[1:n] = (d_face[1:n] / dx) * ((bm - 1.0) * mu[:-1] - (bp - 1.0) * mu[1:])
    rhs = mu - r * np.diff(fadv)

    dcontrib = q * d_face
    diag = np.ones(n)
    diag[:-1] += dcontrib[1:n]
    diag[1:] += dcontrib[1:n]
    lower = np.zeros(n)
    lower[1:] = -dcontrib[1:n]
    upper = np.zeros(n)
    upper[:-1] = -dcontrib[1:n]
    return thomas(lower, diag, upper, rhs)


def hjb_step(phi_next, b, a, source, dt, dx, ham_cap):
    """One backward semi-implicit HJB step; see the compiled twin."""
    n = phi_next.shape[0]
    q = dt / (dx * dx)
    r = dt / dx

    g = np.empty(n)
    g[1:-1] = (phi_next[2:] - phi_next[:-2]) / (2.0 * dx)
    g[0] = (phi_next[1] - phi_next[0]) / (2.0 * dx)
    g[-1] = (phi_next[-1] - phi_next[-2]) / (2.0 * dx)
    ham = 0.5 * a * g * g
    nclip = int(np.count_nonzero(ham > ham_cap))
    ham = np.minimum(ham, ham_cap)
    rhs = phi_next + dt * (source - ham)

    bp = np.maximum(b, 0.0)
    bm = np.minimum(b, 0.0)
    diag = np.ones(n)
    upper = np.zeros(n)
    lower = np.zeros(n)
    up = r * bp + 0.5 * q * a
    lo = -r * bm + 0.5 * q * a
    diag[:-1] += up[:-1]
    upper[:-1] = -up[:-1]
    diag[1:] += lo[1:]
    lower[1:] = -lo[1:]
    return thomas(lower, diag, upper, rhs), nclip
