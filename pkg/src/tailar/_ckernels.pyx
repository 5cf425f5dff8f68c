#cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the hot sampling kernels.

Statement-for-statement twin of ``tailar._pykernels``; see the note there
about cross-backend bit parity. Draws come from the same numpy bit-generator
C entry points that the ``Generator`` methods use, so both backends consume
the stream identically. Compiled with -ffp-contract=off so the C arithmetic
matches numpy's non-fused elementwise operations.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport sqrt

import numpy as np

from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_gamma,
    random_standard_normal,
    random_standard_uniform,
)

from .errors import NumericalError

BACKEND_NAME = "c"


cdef bitgen_t *_bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid BitGenerator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


def sample_gamma(double shape, double rate, object rng):
    """One Gamma(shape, rate) draw, rate parameterization."""
    cdef bitgen_t *bg = _bitgen(rng)
    cdef double g, u
    with rng.bit_generator.lock:
        if shape >= 1.0:
            return random_standard_gamma(bg, shape) / rate
        g = random_standard_gamma(bg, shape + 1.0)
        u = random_standard_uniform(bg)
        while u == 0.0:  # keep the draw strictly positive
            u = random_standard_uniform(bg)
    return g * u ** (1.0 / shape) / rate


def sample_tau(double[::1] y, double phi0, double phi1, double sigma2,
               double nu, object rng):
    """Redraw all T-1 mixture weights given a fully filled series."""
    cdef Py_ssize_t n = y.shape[0] - 1
    out = np.empty(n)
    cdef double[::1] o = out
    cdef bitgen_t *bg = _bitgen(rng)
    cdef double shp = 0.5 * (nu + 1.0)
    cdef double r, rate
    cdef Py_ssize_t i
    with rng.bit_generator.lock, nogil:
        for i in range(n):
            r = (y[i + 1] - phi0) - phi1 * y[i]
            rate = 0.5 * ((r * r) / sigma2 + nu)
            o[i] = random_standard_gamma(bg, shp) / rate
    return out


cdef void _moments(double phi0, double phi1, double sigma2,
                   const double *tau_seg, double y_left, double y_right,
                   Py_ssize_t n, double *a, double *p, double *d, double *w,
                   double *mu, double *cov, Py_ssize_t stride) noexcept nogil:
    cdef double a_prev = 0.0
    cdef double p_prev = 1.0
    cdef double d_prev = 0.0
    cdef Py_ssize_t i, j
    cdef double d_end, resid, cb, pw, v
    for i in range(n + 1):
        a_prev = phi0 + phi1 * a_prev
        p_prev = phi1 * p_prev
        d_prev = phi1 * phi1 * d_prev + 1.0 / tau_seg[i]
        a[i] = a_prev
        p[i] = p_prev
        d[i] = d_prev
    w[n] = 1.0
    for i in range(n - 1, -1, -1):
        w[i] = phi1 * w[i + 1]
    d_end = d[n]
    resid = y_right - (a[n] + p[n] * y_left)
    for i in range(n):
        mu[i] = (a[i] + p[i] * y_left) + (w[i] * d[i] / d_end) * resid
    for i in range(n):
        cb = (w[i] * d[i]) / d_end
        pw = 1.0
        for j in range(i, n):
            v = sigma2 * (pw * d[i] - cb * (w[j] * d[j]))
            cov[i * stride + j] = v
            cov[j * stride + i] = v
            pw = phi1 * pw


cdef bint _try_cholesky(const double *cov, double *out, Py_ssize_t n,
                        double bump, Py_ssize_t stride) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(i + 1):
            acc = cov[i * stride + j]
            if i == j:
                acc = acc + bump
            for k in range(j):
                acc = acc - out[i * stride + k] * out[j * stride + k]
            if i == j:
                if not acc > 0.0:  # also rejects NaN
                    return 0
                out[i * stride + i] = sqrt(acc)
            else:
                out[i * stride + j] = acc / out[j * stride + j]
        for j in range(i + 1, n):
            out[i * stride + j] = 0.0
    return 1


cdef bint _cholesky(const double *cov, double *out, Py_ssize_t n,
                    Py_ssize_t stride) noexcept nogil:
    cdef double trace = 0.0
    cdef double bump = 0.0
    cdef Py_ssize_t i, attempt
    for i in range(n):
        trace += cov[i * stride + i]
    for attempt in range(4):
        if _try_cholesky(cov, out, n, bump, stride):
            return 1
        bump = 1e-12 * trace / n if bump == 0.0 else bump * 10.0
    return 0


def block_moments(double phi0, double phi1, double sigma2,
                  double[::1] tau_seg, double y_left, double y_right):
    """Gaussian conditional moments of one missing run given its anchors.

    Returns (mu, cov, chol) as in the pure backend.
    """
    cdef Py_ssize_t n = tau_seg.shape[0] - 1
    scratch = np.empty(4 * (n + 1))
    mu_arr = np.empty(n)
    cov_arr = np.empty((n, n))
    chol_arr = np.empty((n, n))
    cdef double[::1] sc = scratch
    cdef double[::1] mu = mu_arr
    cdef double[:, ::1] cov = cov_arr
    cdef double[:, ::1] chol = chol_arr
    cdef double *a = &sc[0]
    cdef double *p = &sc[n + 1]
    cdef double *d = &sc[2 * (n + 1)]
    cdef double *w = &sc[3 * (n + 1)]
    cdef bint ok
    _moments(phi0, phi1, sigma2, &tau_seg[0], y_left, y_right, n,
             a, p, d, w, &mu[0], &cov[0, 0], n)
    ok = _cholesky(&cov[0, 0], &chol[0, 0], n, n)
    if not ok:
        raise NumericalError(
            "covariance factorization failed after jitter escalation; "
            "the mixture weights are numerically degenerate")
    return mu_arr, cov_arr, chol_arr


def gibbs_sweep(double[::1] y, double[::1] tau, Py_ssize_t[::1] starts,
                Py_ssize_t[::1] lens, double phi0, double phi1, double sigma2,
                double nu, object rng):
    """One full sweep of the two-stage sampler, in place."""
    cdef Py_ssize_t T = y.shape[0]
    cdef Py_ssize_t D = starts.shape[0]
    cdef Py_ssize_t maxn = 1
    cdef Py_ssize_t b, i, j, s, n
    for b in range(D):
        if lens[b] > maxn:
            maxn = lens[b]
    scratch = np.empty(4 * (maxn + 1) + 2 * maxn + 2 * maxn * maxn)
    cdef double[::1] sc = scratch
    cdef double *a = &sc[0]
    cdef double *p = &sc[maxn + 1]
    cdef double *d = &sc[2 * (maxn + 1)]
    cdef double *w = &sc[3 * (maxn + 1)]
    cdef double *mu = &sc[4 * (maxn + 1)]
    cdef double *z = &sc[4 * (maxn + 1) + maxn]
    cdef double *cov = &sc[4 * (maxn + 1) + 2 * maxn]
    cdef double *chol = &sc[4 * (maxn + 1) + 2 * maxn + maxn * maxn]
    cdef bitgen_t *bg = _bitgen(rng)
    cdef double shp = 0.5 * (nu + 1.0)
    cdef double r, rate, acc
    cdef bint fail = 0
    with rng.bit_generator.lock, nogil:
        for i in range(T - 1):
            r = (y[i + 1] - phi0) - phi1 * y[i]
            rate = 0.5 * ((r * r) / sigma2 + nu)
            tau[i] = random_standard_gamma(bg, shp) / rate
        for b in range(D):
            s = starts[b]
            n = lens[b]
            _moments(phi0, phi1, sigma2, &tau[s], y[s], y[s + n + 1], n,
                     a, p, d, w, mu, cov, maxn)
            if not _cholesky(cov, chol, n, maxn):
                fail = 1
                break
            for i in range(n):
                z[i] = random_standard_normal(bg)
            for i in range(n):
                acc = mu[i]
                for j in range(i + 1):
                    acc = acc + chol[i * maxn + j] * z[j]
                y[s + 1 + i] = acc
    if fail:
        raise NumericalError(
            "covariance factorization failed after jitter escalation; "
            "the mixture weights are numerically degenerate")
