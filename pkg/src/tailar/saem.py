"""Stochastic-approximation EM driver.

Each iteration runs one two-stage sampler sweep per chain, folds the chains'
sufficient statistics into a Robbins-Monro average, and maximizes the
exponential-family surrogate in closed form (one-dimensional root find for
the degrees of freedom). A deterministic Gaussian EM on the same missing
pattern provides the starting point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import backend
from .errors import NumericalError
from .model import (
    LatentState,
    ObservedSeries,
    Params,
    SuffStats,
    _suffstats_vec,
    q_value,
)
from .sampler import _block_arrays

__all__ = [
    "SaemConfig",
    "FitResult",
    "FitDiagnostics",
    "ImputeResult",
    "step_size",
    "sa_update",
    "digamma",
    "nu_solve",
    "m_step",
    "gaussian_em_fit",
    "initialize",
    "fit",
    "impute",
]

NU_BRACKET_DEFAULT = (2.001, 300.0)
VARIANTS = ("full", "zero-mean", "random-walk")


@dataclass(frozen=True)
class SaemConfig:
    """Run configuration for :func:`fit`.

    The step schedule is gamma = 1 for the first ``K`` iterations and
    1/(k - K)**step_exponent afterwards. Any exponent in (1/2, 1] keeps the
    schedule inside the admissible family (values in [0, 1], divergent sum,
    convergent sum of the (1 + lambda)-th powers for some lambda in (1/2, 1]).

    ``nu0`` is the initial degrees of freedom; ``None`` draws it uniformly
    from [2.1, 10] using the run seed.
    """

    L: int = 10
    K: int = 30
    max_iter: int = 150
    step_exponent: float = 1.0
    nu_bracket: tuple[float, float] = NU_BRACKET_DEFAULT
    eps: float = 1e-5
    patience: int = 10
    variant: str = "full"
    seed: int = 0
    nu0: float | None = 5.0
    sigma2_min: float = 1e-12

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("need at least one chain (L >= 1)")
        if self.K < 0 or self.max_iter < 1:
            raise ValueError("K must be >= 0 and max_iter >= 1")
        if not 0.5 < self.step_exponent <= 1.0:
            raise ValueError(
                "step_exponent must lie in (0.5, 1.0] for an admissible "
                "step-size schedule")
        lo, hi = self.nu_bracket
        if not (lo > 2.0 and hi > lo):
            raise ValueError("nu bracket must satisfy 2 < nu_lo < nu_hi")
        if self.eps <= 0.0 or self.patience < 1:
            raise ValueError("eps must be > 0 and patience >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.nu0 is not None and not (lo <= self.nu0 <= hi):
            raise ValueError("nu0 must lie inside the nu bracket")
        if self.sigma2_min <= 0.0:
            raise ValueError("sigma2_min must be > 0")


@dataclass(frozen=True)
class FitDiagnostics:
    q_values: tuple[float, ...]
    sigma2_clamped: tuple[int, ...]
    nu_at_bracket: tuple[int, ...]
    backend: str


@dataclass(frozen=True)
class FitResult:
    params: Params
    trace: tuple[Params, ...]
    s_hat: SuffStats
    iterations: int
    converged: bool
    diagnostics: FitDiagnostics


def step_size(k: int, config: SaemConfig) -> float:
    """Step size for iteration k (1-based): 1 during the warm-up, then
    1/(k - K)**step_exponent."""
    if k < 1:
        raise ValueError("iteration index is 1-based")
    if k <= config.K:
        return 1.0
    return float((k - config.K) ** -config.step_exponent)


def sa_update(s_prev: SuffStats, batch: list[SuffStats], gamma: float) -> SuffStats:
    """Robbins-Monro update: s + gamma * (mean(batch) - s), componentwise."""
    if not batch:
        raise ValueError("batch must contain at least one statistic")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    acc = batch[0].values.copy()
    for b in batch[1:]:
        acc += b.values
    acc /= len(batch)
    return SuffStats(s_prev.values + gamma * (acc - s_prev.values))


# Asymptotic-series coefficients of x**(-2k), k = 1..6.
_DIGAMMA_TAIL = (
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
)


def digamma(x: float) -> float:
    """Digamma function for x > 0, accurate to about 1e-12 absolute.

    Shifts the argument above 6 with the recurrence, then evaluates the
    asymptotic series.
    """
    if not x > 0.0:
        raise ValueError(f"digamma requires x > 0, got {x}")
    acc = 0.0
    while x < 6.0:
        acc -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    out = math.log(x) - 0.5 * inv
    term = inv2
    for c in _DIGAMMA_TAIL:
        out += c * term
        term *= inv2
    return acc + out


def nu_solve(s1: float, T: int,
             bracket: tuple[float, float] = NU_BRACKET_DEFAULT) -> float:
    """Degrees-of-freedom update: the unique root of

        g(nu) = (log(nu/2) - digamma(nu/2) + 1 + s1/(T-1)) / 2

    inside the bracket, found by bisection. g is strictly decreasing, so the
    appropriate endpoint is returned when the root falls outside.
    """
    if T < 2:
        raise ValueError("need T >= 2")
    lo, hi = bracket
    c = 1.0 + s1 / (T - 1)

    def g(nu: float) -> float:
        return 0.5 * (math.log(0.5 * nu) - digamma(0.5 * nu) + c)

    if g(lo) < 0.0:
        return lo
    if g(hi) > 0.0:
        return hi
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) < 1e-12:
            return mid
        if gm > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def m_step(stats: SuffStats, T: int, variant: str = "full",
           nu_bracket: tuple[float, float] = NU_BRACKET_DEFAULT) -> Params:
    """Closed-form maximizer of the surrogate objective.

    The full variant solves the weighted normal equations for (phi0, phi1);
    the zero-mean variant pins phi0 = 0 and the random-walk variant pins
    phi1 = 1. The scale update is shared, with the pinned values substituted.
    """
    s = stats.values
    if not s[2] > 0.0:
        raise NumericalError("total mixture weight s3 must be positive")
    if variant == "full":
        gram = s[2] * s[3] - s[6] * s[6]
        if gram <= 1e-12 * abs(s[2] * s[3]):
            raise NumericalError(
                "degenerate weighted design (s3*s4 - s7^2 ~ 0): the full "
                "normal equations are singular; the zero-mean or random-walk "
                "variant avoids this inversion")
        phi1 = (s[2] * s[5] - s[4] * s[6]) / gram
        phi0 = (s[4] - phi1 * s[6]) / s[2]
    elif variant == "zero-mean":
        if not s[3] > 0.0:
            raise NumericalError("zero-mean update needs s4 > 0")
        phi0 = 0.0
        phi1 = s[5] / s[3]
    elif variant == "random-walk":
        phi1 = 1.0
        phi0 = (s[4] - s[6]) / s[2]
    else:
        raise ValueError(f"variant must be one of {VARIANTS}")
    sigma2 = (s[1] + phi0 * phi0 * s[2] + phi1 * phi1 * s[3]
              - 2.0 * phi0 * s[4] - 2.0 * phi1 * s[5]
              + 2.0 * phi0 * phi1 * s[6]) / (T - 1)
    nu = nu_solve(s[0], T, nu_bracket)
    return Params(float(phi0), float(phi1), max(float(sigma2), 0.0), nu)


def _gaussian_expected_stats(series: ObservedSeries, phi0: float, phi1: float,
                             sigma2: float):
    """E-step of the Gaussian EM: per-position conditional means/variances
    and the five expected sums entering the normal equations."""
    ker = backend.kernels()
    m = series.values.copy()
    var = np.zeros(series.n)
    cov_adj = np.zeros(series.n)  # cov_adj[t] = Cov(y[t-1], y[t] | observed)
    for block in series.blocks:
        ones = np.ones(block.length + 1)
        mu, cov, _ = ker.block_moments(
            phi0, phi1, sigma2, ones,
            m[block.start], m[block.start + block.length + 1])
        lo = block.start + 1
        hi = lo + block.length
        m[lo:hi] = mu
        var[lo:hi] = np.diagonal(cov)
        for i in range(block.length - 1):
            cov_adj[lo + 1 + i] = cov[i, i + 1]
    mt = m[1:]
    mm = m[:-1]
    s_y = float(mt.sum())
    s_ym = float(mm.sum())
    s_yy = float((mt * mm).sum() + cov_adj[1:].sum())
    s_y2 = float((mt * mt + var[1:]).sum())
    s_ym2 = float((mm * mm + var[:-1]).sum())
    return s_y, s_ym, s_yy, s_y2, s_ym2, m


def _gaussian_m_step(n: int, s_y, s_ym, s_yy, s_y2, s_ym2, variant: str):
    if variant == "full":
        denom = n * s_ym2 - s_ym * s_ym
        if denom <= 1e-12 * abs(n * s_ym2):
            raise NumericalError("degenerate normal equations in Gaussian EM")
        phi1 = (n * s_yy - s_y * s_ym) / denom
        phi0 = (s_y - phi1 * s_ym) / n
    elif variant == "zero-mean":
        if not s_ym2 > 0.0:
            raise NumericalError("zero-mean Gaussian EM needs nonzero lags")
        phi0 = 0.0
        phi1 = s_yy / s_ym2
    else:  # random-walk
        phi1 = 1.0
        phi0 = (s_y - s_ym) / n
    sigma2 = (s_y2 + phi0 * phi0 * n + phi1 * phi1 * s_ym2
              - 2.0 * phi0 * s_y - 2.0 * phi1 * s_yy
              + 2.0 * phi0 * phi1 * s_ym) / n
    return phi0, phi1, max(sigma2, 0.0)


def _complete_pairs_start(series: ObservedSeries, variant: str):
    """Starting point for the Gaussian EM from fully observed adjacent pairs."""
    mask = series.mask
    ok = mask[1:] & mask[:-1]
    zt = series.values[1:][ok]
    zm = series.values[:-1][ok]
    n = zt.size
    obs = series.values[mask]
    fallback = (0.0, 0.0, max(float(np.var(obs)), 1e-8))
    if n < 3:
        return fallback if variant != "random-walk" else (0.0, 1.0, fallback[2])
    try:
        return _gaussian_m_step(n, float(zt.sum()), float(zm.sum()),
                                float((zt * zm).sum()), float((zt * zt).sum()),
                                float((zm * zm).sum()), variant)
    except NumericalError:
        return fallback


def gaussian_em_fit(series: ObservedSeries, max_iter: int = 500,
                    tol: float = 1e-8, variant: str = "full",
                    trace_out: list | None = None) -> Params:
    """Deterministic EM for the Gaussian-innovation model on the same
    missing pattern. Returns the fitted parameters with ``nu = inf``.

    With no missing values this is the ordinary least-squares fit. If
    ``trace_out`` is given, the per-iteration parameters are appended to it.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    phi0, phi1, sigma2 = _complete_pairs_start(series, variant)
    sigma2 = max(sigma2, 1e-12)
    n = series.n - 1
    for _ in range(max_iter):
        s_y, s_ym, s_yy, s_y2, s_ym2, _ = _gaussian_expected_stats(
            series, phi0, phi1, sigma2)
        new0, new1, new2 = _gaussian_m_step(n, s_y, s_ym, s_yy, s_y2, s_ym2,
                                            variant)
        new2 = max(new2, 1e-12)
        if trace_out is not None:
            trace_out.append(Params(new0, new1, new2, math.inf))
        change = max(abs(new0 - phi0) / (abs(phi0) + 1e-12),
                     abs(new1 - phi1) / (abs(phi1) + 1e-12),
                     abs(new2 - sigma2) / (abs(sigma2) + 1e-12))
        phi0, phi1, sigma2 = new0, new1, new2
        if change < tol:
            break
    return Params(phi0, phi1, sigma2, math.inf)


def _gaussian_fill_means(series: ObservedSeries, params: Params) -> np.ndarray:
    """Conditional means of the missing runs under the Gaussian model with
    unit mixture weights. Used to seed the chains and the imputer."""
    ker = backend.kernels()
    sigma2 = max(params.sigma2, 1e-12)
    fills = []
    for block in series.blocks:
        ones = np.ones(block.length + 1)
        mu, _, _ = ker.block_moments(
            params.phi0, params.phi1, sigma2, ones,
            series.values[block.start],
            series.values[block.start + block.length + 1])
        fills.append(mu)
    if not fills:
        return np.empty(0)
    return np.concatenate(fills)


def initialize(series: ObservedSeries,
               config: SaemConfig) -> tuple[Params, list[LatentState]]:
    """Starting point: Gaussian EM estimates for (phi0, phi1, sigma2), the
    configured initial degrees of freedom, and every chain's fills set to the
    Gaussian conditional means (identical across chains)."""
    gauss = gaussian_em_fit(series, variant=config.variant)
    nu0 = config.nu0
    if nu0 is None:
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0x6E75)))
        nu0 = float(rng.uniform(2.1, 10.0))
    params0 = Params(gauss.phi0, gauss.phi1,
                     max(gauss.sigma2, config.sigma2_min), nu0)
    fills = _gaussian_fill_means(series, gauss)
    tau0 = np.ones(series.n - 1)
    states = [LatentState(tau=tau0.copy(), fills=fills.copy())
              for _ in range(config.L)]
    return params0, states


def _relative_change(new: Params, old: Params) -> float:
    return max(
        abs(new.phi0 - old.phi0) / (abs(old.phi0) + 1e-12),
        abs(new.phi1 - old.phi1) / (abs(old.phi1) + 1e-12),
        abs(new.sigma2 - old.sigma2) / (abs(old.sigma2) + 1e-12),
        abs(new.nu - old.nu) / (abs(old.nu) + 1e-12),
    )


def fit(series: ObservedSeries, config: SaemConfig | None = None) -> FitResult:
    """Run the full estimation loop.

    Deterministic given ``config.seed``: the chains draw from independently
    spawned generator streams and the batch reduction follows the fixed
    chain order, so parallel and serial execution agree bit for bit.
    """
    if config is None:
        config = SaemConfig()
    params, states = initialize(series, config)
    T = series.n
    starts, lens = _block_arrays(series)
    y_chains = [series.filled(st.fills) for st in states]
    tau_chains = [st.tau.copy() for st in states]
    rngs = [np.random.default_rng(s)
            for s in np.random.SeedSequence(config.seed).spawn(config.L)]
    ker = backend.kernels()
    lo, hi = config.nu_bracket

    s_hat = np.zeros(7)
    trace: list[Params] = []
    q_values: list[float] = []
    sigma2_clamped: list[int] = []
    nu_at_bracket: list[int] = []
    stable = 0
    converged = False
    for k in range(1, config.max_iter + 1):
        gamma = step_size(k, config)
        acc = np.zeros(7)
        for l in range(config.L):
            ker.gibbs_sweep(y_chains[l], tau_chains[l], starts, lens,
                            params.phi0, params.phi1, params.sigma2,
                            params.nu, rngs[l])
            acc += _suffstats_vec(y_chains[l], tau_chains[l])
        acc /= config.L
        s_hat = s_hat + gamma * (acc - s_hat)
        previous = params
        params = m_step(SuffStats(s_hat), T, config.variant, config.nu_bracket)
        if params.sigma2 < config.sigma2_min:
            params = replace(params, sigma2=config.sigma2_min)
            sigma2_clamped.append(k)
        if params.nu == lo or params.nu == hi:
            nu_at_bracket.append(k)
        trace.append(params)
        q_values.append(q_value(params, SuffStats(s_hat), T))
        if _relative_change(params, previous) < config.eps:
            stable += 1
            if stable >= config.patience:
                converged = True
                break
        else:
            stable = 0
    return FitResult(
        params=params,
        trace=tuple(trace),
        s_hat=SuffStats(s_hat),
        iterations=len(trace),
        converged=converged,
        diagnostics=FitDiagnostics(
            q_values=tuple(q_values),
            sigma2_clamped=tuple(sigma2_clamped),
            nu_at_bracket=tuple(nu_at_bracket),
            backend=backend.active_backend(),
        ),
    )


@dataclass(frozen=True)
class ImputeResult:
    """Posterior summaries of the missing values at fixed parameters."""

    indices: np.ndarray  # 0-based positions of the missing samples
    mean: np.ndarray
    sd: np.ndarray
    draws: np.ndarray | None = None


def impute(series: ObservedSeries, params: Params, n_draws: int = 200,
           seed: int = 0, burn_in: int = 100,
           keep_draws: bool = False) -> ImputeResult:
    """Sample the missing values at fixed parameters and summarize them.

    Runs ``burn_in`` sampler sweeps from the Gaussian conditional means,
    then keeps ``n_draws`` states and reports the per-index mean and
    standard deviation.
    """
    if n_draws < 1:
        raise ValueError("need n_draws >= 1")
    indices = series.missing_indices()
    if indices.size == 0:
        return ImputeResult(indices=indices, mean=np.empty(0),
                            sd=np.empty(0),
                            draws=np.empty((n_draws, 0)) if keep_draws else None)
    if not params.sigma2 > 0.0 or params.is_gaussian:
        raise ValueError("imputation requires sigma2 > 0 and finite nu")
    y = series.filled(_gaussian_fill_means(series, params))
    tau = np.ones(series.n - 1)
    starts, lens = _block_arrays(series)
    rng = np.random.default_rng(seed)
    ker = backend.kernels()
    for _ in range(burn_in):
        ker.gibbs_sweep(y, tau, starts, lens, params.phi0, params.phi1,
                        params.sigma2, params.nu, rng)
    draws = np.empty((n_draws, indices.size))
    miss = ~series.mask
    for i in range(n_draws):
        ker.gibbs_sweep(y, tau, starts, lens, params.phi0, params.phi1,
                        params.sigma2, params.nu, rng)
        draws[i] = y[miss]
    sd = draws.std(axis=0, ddof=1) if n_draws > 1 else np.zeros(indices.size)
    return ImputeResult(indices=indices, mean=draws.mean(axis=0), sd=sd,
                        draws=draws if keep_draws else None)
