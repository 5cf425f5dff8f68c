"""Core domain types, densities, sufficient statistics, and simulation.

The model is a first-order autoregression whose innovations follow a
zero-mean Student's t-distribution with scale ``sigma2`` and degrees of
freedom ``nu``:

    y[t] = phi0 + phi1 * y[t-1] + eps[t],   eps[t] ~ t(0, sigma2, nu)

The t innovation is handled through its Gaussian scale-mixture form: given a
latent precision weight ``tau ~ Gamma(nu/2, nu/2)`` the innovation is normal
with variance ``sigma2 / tau``. A series may contain missing runs; each run
must be bracketed by observed samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

__all__ = [
    "Params",
    "MissingBlock",
    "ObservedSeries",
    "SuffStats",
    "LatentState",
    "student_t_logpdf",
    "simulate_ar1",
    "apply_missing",
    "find_missing_blocks",
    "sufficient_statistics",
    "q_value",
]


@dataclass(frozen=True)
class Params:
    """Model parameter vector (phi0, phi1, sigma2, nu).

    ``sigma2`` must be nonnegative (zero is legal only for the deterministic
    simulation limit, never for fitting) and ``nu`` strictly positive;
    ``nu = inf`` marks Gaussian innovations.
    """

    phi0: float
    phi1: float
    sigma2: float
    nu: float

    def __post_init__(self):
        if not (math.isfinite(self.phi0) and math.isfinite(self.phi1)):
            raise ValueError("phi0 and phi1 must be finite")
        if not self.sigma2 >= 0.0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")
        if not self.nu > 0.0:
            raise ValueError(f"nu must be > 0, got {self.nu}")

    @property
    def is_gaussian(self) -> bool:
        return math.isinf(self.nu)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.phi0, self.phi1, self.sigma2, self.nu)


@dataclass(frozen=True)
class MissingBlock:
    """One maximal run of consecutive missing samples.

    ``start`` is the 0-based index of the last observed sample before the
    run (reported 1-based by the CLI); ``length`` counts the missing samples.
    The sample at ``start + length + 1`` is observed again.
    """

    start: int
    length: int

    def missing_range(self) -> range:
        return range(self.start + 1, self.start + 1 + self.length)


def find_missing_blocks(mask: np.ndarray) -> tuple[MissingBlock, ...]:
    """Decompose a boolean observation mask into maximal missing runs.

    Raises :class:`DataError` if the series starts or ends with a missing
    value, since every run needs observed samples on both sides.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 1:
        raise ValueError("mask must be one-dimensional")
    if mask.size == 0 or mask.all():
        return ()
    if not mask[0] or not mask[-1]:
        raise DataError(
            "series must start and end with observed values; trim the "
            "leading/trailing missing run first (CLI: --trim-edges)")
    blocks = []
    t = 1
    n = mask.size
    while t < n:
        if not mask[t]:
            run = t
            while not mask[run]:
                run += 1
            blocks.append(MissingBlock(start=t - 1, length=run - t))
            t = run
        t += 1
    return tuple(blocks)


@dataclass(frozen=True)
class ObservedSeries:
    """A time series with an observation mask and derived missing runs.

    ``values`` holds NaN at unobserved positions. The first and last samples
    must be observed and the length must be at least 3.
    """

    values: np.ndarray
    mask: np.ndarray
    blocks: tuple[MissingBlock, ...] = field(init=False)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        if values.ndim != 1 or values.shape != mask.shape:
            raise ValueError("values and mask must be 1-D arrays of equal length")
        if values.size < 3:
            raise DataError(f"series too short: need T >= 3, got {values.size}")
        if not np.isfinite(values[mask]).all():
            raise DataError("observed values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "blocks", find_missing_blocks(mask))

    @classmethod
    def complete(cls, values: np.ndarray) -> "ObservedSeries":
        values = np.asarray(values, dtype=float)
        return cls(values, np.ones(values.shape, dtype=bool))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def n_missing(self) -> int:
        return int((~self.mask).sum())

    def missing_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.mask)

    def filled(self, fills: np.ndarray) -> np.ndarray:
        """Full-length copy with ``fills`` substituted at missing positions."""
        fills = np.asarray(fills, dtype=float)
        if fills.size != self.n_missing:
            raise ValueError(
                f"expected {self.n_missing} fill values, got {fills.size}")
        y = self.values.copy()
        y[~self.mask] = fills
        return y


@dataclass(frozen=True)
class SuffStats:
    """The seven-dimensional minimal sufficient statistic of the
    complete-data likelihood, with components (sums over t = 2..T):

        0: sum(log(tau_t) - tau_t)        4: sum(tau_t * y_t)
        1: sum(tau_t * y_t^2)             5: sum(tau_t * y_t * y_{t-1})
        2: sum(tau_t)                     6: sum(tau_t * y_{t-1})
        3: sum(tau_t * y_{t-1}^2)
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (7,):
            raise ValueError("sufficient statistic must have exactly 7 components")
        object.__setattr__(self, "values", values)

    @property
    def gram(self) -> float:
        """s3*s4 - s7^2, the Gram determinant of the weighted design."""
        v = self.values
        return float(v[2] * v[3] - v[6] * v[6])

    def __getitem__(self, i: int) -> float:
        return float(self.values[i])


@dataclass(frozen=True)
class LatentState:
    """One chain's latent data: mixture weights (length T-1) and the current
    fill values at missing positions, in index order."""

    tau: np.ndarray
    fills: np.ndarray

    def __post_init__(self):
        tau = np.ascontiguousarray(self.tau, dtype=float)
        fills = np.ascontiguousarray(self.fills, dtype=float)
        if tau.ndim != 1 or fills.ndim != 1:
            raise ValueError("tau and fills must be 1-D")
        if not (np.isfinite(tau).all() and (tau > 0.0).all()):
            raise ValueError("mixture weights must be finite and positive")
        if not np.isfinite(fills).all():
            raise ValueError("fills must be finite")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "fills", fills)


def student_t_logpdf(y: float, mu: float, sigma2: float, nu: float) -> float:
    """Log density of the location-scale Student's t-distribution.

    ``sigma2`` is the squared scale, not the variance (the variance is
    nu*sigma2/(nu-2) for nu > 2).
    """
    if not sigma2 > 0.0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    if not nu > 0.0:
        raise ValueError(f"nu must be > 0, got {nu}")
    z2 = (y - mu) ** 2 / (nu * sigma2)
    return (math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu)
            - 0.5 * math.log(nu * math.pi * sigma2)
            - 0.5 * (nu + 1.0) * math.log1p(z2))


def simulate_ar1(params: Params, T: int, y1: float | None = None,
                 seed: int = 0) -> np.ndarray:
    """Simulate a length-T path of the model.

    Innovations are drawn through the scale mixture: tau ~ Gamma(nu/2, nu/2),
    eps = z * sqrt(sigma2 / tau) with z standard normal. ``sigma2 = 0`` gives
    the deterministic recursion; ``nu = inf`` gives Gaussian innovations.
    ``y1`` defaults to the stationary mean phi0/(1-phi1) when |phi1| < 1,
    else 0.
    """
    if T < 2:
        raise ValueError(f"need T >= 2, got {T}")
    if y1 is None:
        y1 = params.phi0 / (1.0 - params.phi1) if abs(params.phi1) < 1.0 else 0.0
    y = np.empty(T)
    y[0] = y1
    if params.sigma2 == 0.0:
        for t in range(1, T):
            y[t] = params.phi0 + params.phi1 * y[t - 1]
        return y
    rng = np.random.default_rng(seed)
    if params.is_gaussian:
        eps = rng.standard_normal(T - 1) * math.sqrt(params.sigma2)
    else:
        half_nu = 0.5 * params.nu
        tau = rng.standard_gamma(half_nu, size=T - 1) / half_nu
        z = rng.standard_normal(T - 1)
        eps = z * np.sqrt(params.sigma2 / tau)
    for t in range(1, T):
        y[t] = params.phi0 + params.phi1 * y[t - 1] + eps[t - 1]
    return y


def apply_missing(y: np.ndarray, rho: float, seed: int = 0) -> ObservedSeries:
    """Mask round(rho*T) interior samples, chosen uniformly without
    replacement. The first and last samples are never masked."""
    y = np.asarray(y, dtype=float)
    T = y.size
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    n_mis = int(round(rho * T))
    if n_mis > T - 2:
        raise DataError(
            f"cannot delete {n_mis} of {T} samples while keeping both "
            "endpoints observed")
    mask = np.ones(T, dtype=bool)
    if n_mis > 0:
        rng = np.random.default_rng(seed)
        drop = rng.choice(np.arange(1, T - 1), size=n_mis, replace=False)
        mask[drop] = False
    values = y.copy()
    values[~mask] = np.nan
    return ObservedSeries(values, mask)


def _suffstats_vec(y: np.ndarray, tau: np.ndarray) -> np.ndarray:
    yt = y[1:]
    ym = y[:-1]
    return np.array([
        np.sum(np.log(tau) - tau),
        np.sum(tau * yt * yt),
        np.sum(tau),
        np.sum(tau * ym * ym),
        np.sum(tau * yt),
        np.sum(tau * yt * ym),
        np.sum(tau * ym),
    ])


def sufficient_statistics(y: np.ndarray, tau: np.ndarray) -> SuffStats:
    """Evaluate the seven sufficient-statistic sums for a fully filled series
    ``y`` (length T) and mixture weights ``tau`` (length T-1, positive)."""
    y = np.asarray(y, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (y.size - 1,):
        raise ValueError(
            f"tau must have length T-1 = {y.size - 1}, got {tau.size}")
    if not (tau > 0.0).all():
        raise ValueError("mixture weights must be strictly positive")
    return SuffStats(_suffstats_vec(y, tau))


def q_value(params: Params, stats: SuffStats, T: int) -> float:
    """Surrogate objective maximized by the M-step: the expected
    complete-data log-likelihood evaluated at an estimated sufficient
    statistic, up to an additive constant.

    The constant -(T-1)/2*log(2pi) and the mixture-weight carrier term are
    omitted; they do not depend on the parameters.
    """
    if not params.sigma2 > 0.0:
        raise ValueError("q_value requires sigma2 > 0")
    if params.is_gaussian:
        raise ValueError("q_value requires finite nu")
    s = stats.values
    nu = params.nu
    sigma2 = params.sigma2
    phi0 = params.phi0
    phi1 = params.phi1
    half_nu = 0.5 * nu
    out = (T - 1) * (half_nu * math.log(half_nu) - math.lgamma(half_nu)
                     - 0.5 * math.log(sigma2))
    out += half_nu * s[0]
    out -= (s[1] + phi0 * phi0 * s[2] + phi1 * phi1 * s[3]) / (2.0 * sigma2)
    out += (phi0 * s[4] + phi1 * s[5] - phi0 * phi1 * s[6]) / sigma2
    return out
