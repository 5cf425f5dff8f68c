"""Shared test oracles, kept independent of the production code paths."""
import math

import numpy as np


def suffstats_loop(y, tau):
    """Naive double-loop evaluation of the seven sufficient-statistic sums."""
    s = [0.0] * 7
    for t in range(1, len(y)):
        w = tau[t - 1]
        s[0] += math.log(w) - w
        s[1] += w * y[t] * y[t]
        s[2] += w
        s[3] += w * y[t - 1] * y[t - 1]
        s[4] += w * y[t]
        s[5] += w * y[t] * y[t - 1]
        s[6] += w * y[t - 1]
    return np.array(s)


def ratio_form_moments(phi0, phi1, sigma2, tau_seg, y_left, y_right):
    """Direct transliteration of the closed-form block conditional written
    with negative powers of phi1 (valid for phi1 != 0). Cross-check only;
    the production path uses the joint-then-condition construction."""
    n = len(tau_seg) - 1

    def intercept_sum(k):  # sum_{q=0}^{k-1} phi1^q phi0
        if phi1 == 1.0:
            return k * phi0
        return phi0 * (phi1 ** k - 1.0) / (phi1 - 1.0)

    def ssum(i, offset):  # sum_{q=1}^{i} phi1^(offset - 2q) / tau_q
        return sum(phi1 ** (offset - 2 * q) / tau_seg[q - 1]
                   for q in range(1, i + 1))

    resid = y_right - intercept_sum(n + 1) - phi1 ** (n + 1) * y_left
    denom_mu = ssum(n + 1, n + 1)
    mu = np.array([
        intercept_sum(i) + phi1 ** i * y_left
        + ssum(i, i) / denom_mu * resid
        for i in range(1, n + 1)])
    denom_cov = ssum(n + 1, 0)
    cov = np.empty((n, n))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            cov[i - 1, j - 1] = sigma2 * (
                ssum(min(i, j), i + j)
                - ssum(i, i) * ssum(j, j) / denom_cov)
    return mu, cov


def gaussian_observed_loglik(series, phi0, phi1, sigma2):
    """Observed-data log-likelihood of the Gaussian-innovation model,
    conditioning on the first sample, with each missing run marginalized
    out in closed form."""
    y = series.values
    mask = series.mask
    ll = 0.0
    for t in range(1, series.n):
        if mask[t] and mask[t - 1]:
            ll += _norm_logpdf(y[t], phi0 + phi1 * y[t - 1], sigma2)
    for b in series.blocks:
        n = b.length
        mean = sum(phi1 ** q * phi0 for q in range(n + 1))
        mean += phi1 ** (n + 1) * y[b.start]
        var = sigma2 * sum(phi1 ** (2 * j) for j in range(n + 1))
        ll += _norm_logpdf(y[b.start + n + 1], mean, var)
    return ll


def _norm_logpdf(x, mean, var):
    return -0.5 * (math.log(2.0 * math.pi * var) + (x - mean) ** 2 / var)


def forward_block_oracle(phi0, phi1, sigma2, tau_seg, y_left, y_right,
                         n_paths, window_frac, rng):
    """Monte-Carlo conditioning oracle for the block conditional: simulate
    forward paths of the recursion across the block and keep those whose
    endpoint lands in a narrow window around the right anchor. Returns the
    kept interior coordinates and kept endpoints."""
    n = len(tau_seg) - 1
    sd = np.sqrt(sigma2 / np.asarray(tau_seg))
    eps = rng.standard_normal((n_paths, n + 1)) * sd
    y = np.empty((n_paths, n + 1))
    prev = y_left
    for i in range(n + 1):
        prev = phi0 + phi1 * prev + eps[:, i]
        y[:, i] = prev
    end = y[:, n]
    window = window_frac * end.std()
    keep = np.abs(end - y_right) < window
    return y[keep, :n], end[keep]


def batch_se(values, n_batches=10):
    """Standard error of the mean of ``values`` via batch means. Works on
    1-D samples or stacked sample rows."""
    values = np.asarray(values)
    m = values.shape[0]
    size = m // n_batches
    batches = np.array([values[i * size:(i + 1) * size].mean(axis=0)
                        for i in range(n_batches)])
    return batches.std(axis=0, ddof=1) / math.sqrt(n_batches)


def fd_gradient_5pt(f, x, h):
    """Five-point central finite-difference gradient."""
    x = np.asarray(x, dtype=float)
    grad = np.empty(x.size)
    for i in range(x.size):
        hp = h * (1.0 + abs(x[i]))
        e = np.zeros(x.size)
        e[i] = 1.0
        grad[i] = (-f(x + 2 * hp * e) + 8 * f(x + hp * e)
                   - 8 * f(x - hp * e) + f(x - 2 * hp * e)) / (12.0 * hp)
    return grad
