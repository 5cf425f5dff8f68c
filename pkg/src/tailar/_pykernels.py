"""Pure NumPy/Python implementation of the hot sampling kernels.

This module mirrors ``tailar._ckernels`` statement for statement. Both
backends draw from the same ``numpy.random`` bit-generator stream in the
same order and use identical floating-point expression trees, so a seeded
run produces bit-identical output regardless of which backend is active
(asserted by tests/test_backends.py).

Do not "simplify" arithmetic here without making the same change in the
Cython source: reassociating an expression breaks cross-backend parity.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import NumericalError

BACKEND_NAME = "python"


def sample_gamma(shape: float, rate: float, rng: np.random.Generator) -> float:
    """One Gamma(shape, rate) draw, rate parameterization.

    shape >= 1 uses the generator's rejection sampler directly; shape < 1 is
    boosted through a Gamma(shape + 1) draw times U**(1/shape).
    """
    if shape >= 1.0:
        return rng.standard_gamma(shape) / rate
    g = rng.standard_gamma(shape + 1.0)
    u = rng.random()
    while u == 0.0:  # keep the draw strictly positive
        u = rng.random()
    return g * u ** (1.0 / shape) / rate


def sample_tau(y: np.ndarray, phi0: float, phi1: float, sigma2: float,
               nu: float, rng: np.random.Generator) -> np.ndarray:
    """Redraw all T-1 mixture weights given a fully filled series.

    The weight for the transition into ``y[i+1]`` is gamma distributed with
    shape (nu+1)/2 and rate (residual^2/sigma2 + nu)/2.
    """
    r = (y[1:] - phi0) - phi1 * y[:-1]
    rate = 0.5 * ((r * r) / sigma2 + nu)
    g = rng.standard_gamma(0.5 * (nu + 1.0), size=y.shape[0] - 1)
    return g / rate


def block_moments(phi0: float, phi1: float, sigma2: float, tau_seg: np.ndarray,
                  y_left: float, y_right: float):
    """Gaussian conditional moments of one missing run given its anchors.

    ``tau_seg`` holds the n+1 mixture weights for the transitions into the
    n missing samples and into the right anchor. Builds the joint law of the
    run plus the right anchor given the left anchor, then conditions on the
    right anchor. Only nonnegative powers of phi1 appear, so the construction
    is well defined at phi1 = 0.

    Returns (mu, cov, chol): mean vector (n,), covariance (n, n), and its
    lower-triangular Cholesky factor.
    """
    n = tau_seg.shape[0] - 1
    a = np.empty(n + 1)  # a[i] = running intercept sum for coordinate i+1
    p = np.empty(n + 1)  # p[i] = phi1^(i+1)
    d = np.empty(n + 1)  # d[i] = joint variance recurrence, units of sigma2
    a_prev = 0.0
    p_prev = 1.0
    d_prev = 0.0
    for i in range(n + 1):
        a_prev = phi0 + phi1 * a_prev
        p_prev = phi1 * p_prev
        d_prev = phi1 * phi1 * d_prev + 1.0 / tau_seg[i]
        a[i] = a_prev
        p[i] = p_prev
        d[i] = d_prev
    w = np.empty(n + 1)  # w[i] = phi1^(n - i), cross term to the right anchor
    w[n] = 1.0
    for i in range(n - 1, -1, -1):
        w[i] = phi1 * w[i + 1]
    d_end = d[n]
    resid = y_right - (a[n] + p[n] * y_left)
    mu = np.empty(n)
    for i in range(n):
        mu[i] = (a[i] + p[i] * y_left) + (w[i] * d[i] / d_end) * resid
    cov = np.empty((n, n))
    for i in range(n):
        cb = (w[i] * d[i]) / d_end
        pw = 1.0
        for j in range(i, n):
            v = sigma2 * (pw * d[i] - cb * (w[j] * d[j]))
            cov[i, j] = v
            cov[j, i] = v
            pw = phi1 * pw
    chol = np.empty((n, n))
    if not _cholesky(cov, chol, n):
        raise NumericalError(
            "covariance factorization failed after jitter escalation; "
            "the mixture weights are numerically degenerate")
    return mu, cov, chol


def _cholesky(cov: np.ndarray, out: np.ndarray, n: int) -> bool:
    """Lower Cholesky with bounded diagonal jitter repair.

    On failure adds 1e-12 * trace/n to the diagonal and escalates by 10x up
    to three times before giving up.
    """
    trace = 0.0
    for i in range(n):
        trace += cov[i, i]
    bump = 0.0
    for attempt in range(4):
        if _try_cholesky(cov, out, n, bump):
            return True
        bump = 1e-12 * trace / n if bump == 0.0 else bump * 10.0
    return False


def _try_cholesky(cov: np.ndarray, out: np.ndarray, n: int, bump: float) -> bool:
    for i in range(n):
        for j in range(i + 1):
            acc = cov[i, j]
            if i == j:
                acc = acc + bump
            for k in range(j):
                acc = acc - out[i, k] * out[j, k]
            if i == j:
                if not acc > 0.0:  # also rejects NaN
                    return False
                out[i, i] = math.sqrt(acc)
            else:
                out[i, j] = acc / out[j, j]
        for j in range(i + 1, n):
            out[i, j] = 0.0
    return True


def gibbs_sweep(y: np.ndarray, tau: np.ndarray, starts: np.ndarray,
                lens: np.ndarray, phi0: float, phi1: float, sigma2: float,
                nu: float, rng: np.random.Generator) -> None:
    """One full sweep of the two-stage sampler, in place.

    First refreshes every mixture weight from the current fills, then redraws
    each missing run from its anchored Gaussian conditional. Mutates ``tau``
    everywhere and ``y`` at missing positions only.
    """
    tau[:] = sample_tau(y, phi0, phi1, sigma2, nu, rng)
    for b in range(starts.shape[0]):
        s = starts[b]
        n = lens[b]
        mu, cov, chol = block_moments(
            phi0, phi1, sigma2, tau[s:s + n + 1], y[s], y[s + n + 1])
        z = rng.standard_normal(n)
        for i in range(n):
            acc = mu[i]
            for j in range(i + 1):
                acc = acc + chol[i, j] * z[j]
            y[s + 1 + i] = acc
