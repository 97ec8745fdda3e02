# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot per-step loops.

The numpy backend in ``_core_py`` implements the same three entry points
with identical semantics; ``backend.py`` picks one at import time.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expm1, fabs

cnp.import_array()


cdef inline double _bernoulli(double w) nogil:
    # B(w) = w / (e^w - 1), continuous at 0.
    if fabs(w) < 1e-8:
        return 1.0 - 0.5 * w + w * w / 12.0
    return w / expm1(w)


def bernoulli(double w):
    """Exponential-fitting weight B(w) = w / (e^w - 1)."""
    return _bernoulli(w)


def thomas(double[::1] lower, double[::1] diag, double[::1] upper,
           double[::1] rhs):
    """Solve a tridiagonal system by the Thomas algorithm.

    ``lower[i]`` multiplies x[i-1] in row i (lower[0] ignored), ``upper[i]``
    multiplies x[i+1] (upper[n-1] ignored).  No pivoting: callers supply
    diagonally dominant systems.
    """
    cdef Py_ssize_t n = diag.shape[0]
    cdef cnp.ndarray[double, ndim=1] x = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] cp = np.empty(n, dtype=np.float64)
    cdef double[::1] xv = x
    cdef double[::1] cpv = cp
    cdef Py_ssize_t i
    cdef double m

    cpv[0] = upper[0] / diag[0]
    xv[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i] * cpv[i - 1]
        if i < n - 1:
            cpv[i] = upper[i] / m
        xv[i] = (rhs[i] - lower[i] * xv[i - 1]) / m
    for i in range(n - 2, -1, -1):
        xv[i] = xv[i] - cpv[i] * xv[i + 1]
    return x


def fp_substep(double[::1] mu, double[::1] ut_face, double[::1] d_face,
               double dt, double dx):
    """One conservative drift-diffusion substep with no-flux boundaries.

    The face flux is the exponentially fitted (Chang-Cooper style)
    F = ut*mu - D dmu/dx; its advective part is applied explicitly at the
    current density, the centered-diffusion part implicitly.  Frozen
    coefficients: ``ut_face`` (effective drift, nx+1 faces) and ``d_face``
    (diffusion D, nx+1 faces).  Exact discrete stationary states and exact
    mass conservation up to solver roundoff.
    """
    cdef Py_ssize_t n = mu.shape[0]
    cdef cnp.ndarray[double, ndim=1] rhs = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] dl = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] dm = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] du = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] fadv = np.zeros(n + 1, dtype=np.float64)
    cdef double[::1] rv = rhs
    cdef double[::1] dlv = dl
    cdef double[::1] dmv = dm
    cdef double[::1] duv = du
    cdef double[::1] fv = fadv
    cdef Py_ssize_t j, i
    cdef double w, bm, bp, r, q

    r = dt / dx
    q = dt / (dx * dx)
    # interior faces 1..n-1; faces 0 and n carry zero flux
    for j in range(1, n):
        w = ut_face[j] * dx / d_face[j]
        bp = _bernoulli(w)
        bm = bp + w          # B(-w) = B(w) + w
        fv[j] = (d_face[j] / dx) * ((bm - 1.0) * mu[j - 1] - (bp - 1.0) * mu[j])
    for i in range(n):
        rv[i] = mu[i] - r * (fv[i + 1] - fv[i])
        dmv[i] = 1.0
        if i + 1 < n:
            dmv[i] += q * d_face[i + 1]
            duv[i] = -q * d_face[i + 1]
        if i > 0:
            dmv[i] += q * d_face[i]
            dlv[i] = -q * d_face[i]
    return thomas(dl, dm, du, rhs)


def hjb_step(double[::1] phi_next, double[::1] b, double[::1] a,
             double[::1] source, double dt, double dx, double ham_cap):
    """One backward semi-implicit HJB step.

    Solves (I - dt L0) phi_k = phi_{k+1} + dt (source - H_{k+1}), where
    L0 = b d/dx + a/2 d2/dx2 with upwind drift and homogeneous Neumann
    boundaries, and H = a/2 (d phi_{k+1}/dx)^2 is the explicit quadratic
    term clipped at ``ham_cap``.  Returns (phi_k, number of clipped nodes).
    """
    cdef Py_ssize_t n = phi_next.shape[0]
    cdef cnp.ndarray[double, ndim=1] rhs = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] dl = np.zeros(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] dm = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] du = np.zeros(n, dtype=np.float64)
    cdef double[::1] rv = rhs
    cdef double[::1] dlv = dl
    cdef double[::1] dmv = dm
    cdef double[::1] duv = du
    cdef Py_ssize_t i, nclip
    cdef double g, h, bp, bm, q, r

    q = dt / (dx * dx)
    r = dt / dx
    nclip = 0
    for i in range(n):
        # Neumann-ghost centered gradient of the later-time slice
        if i == 0:
            g = (phi_next[1] - phi_next[0]) / (2.0 * dx)
        elif i == n - 1:
            g = (phi_next[n - 1] - phi_next[n - 2]) / (2.0 * dx)
        else:
            g = (phi_next[i + 1] - phi_next[i - 1]) / (2.0 * dx)
        h = 0.5 * a[i] * g * g
        if h > ham_cap:
            h = ham_cap
            nclip += 1
        rv[i] = phi_next[i] + dt * (source[i] - h)

        bp = b[i] if b[i] > 0.0 else 0.0
        bm = b[i] if b[i] < 0.0 else 0.0
        dmv[i] = 1.0
        if i + 1 < n:
            dmv[i] += r * bp + 0.5 * q * a[i]
            duv[i] = -(r * bp + 0.5 * q * a[i])
        if i > 0:
            dmv[i] += -r * bm + 0.5 * q * a[i]
            dlv[i] = -(-r * bm + 0.5 * q * a[i])
    return thomas(dl, dm, du, rhs), nclip
