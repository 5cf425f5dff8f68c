"""The two conditional sampling kernels of the E-step.

Given a fully filled series, each mixture weight is conditionally gamma
distributed and independent across time. Given the weights, each missing
run is jointly Gaussian, independent of the other runs, and depends on the
observed data only through its two anchors. A :func:`gibbs_step` applies
the two draws in that order, which is one transition of the Markov chain
whose stationary law is the joint conditional of (weights, missing values).

All functions are pure given an explicit ``numpy.random.Generator``;
distinct chains can run concurrently when they own independent generators.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .model import LatentState, MissingBlock, ObservedSeries, Params

__all__ = [
    "BlockConditional",
    "sample_gamma",
    "sample_tau",
    "block_conditional",
    "sample_missing",
    "gibbs_step",
]


@dataclass(frozen=True)
class BlockConditional:
    """Conditional Gaussian law of one missing run given its anchors:
    mean vector, covariance, and the lower Cholesky factor used to draw."""

    mu: np.ndarray
    cov: np.ndarray
    chol: np.ndarray


def _require_sampling_params(params: Params) -> None:
    if not params.sigma2 > 0.0:
        raise ValueError("sampling requires sigma2 > 0")
    if params.is_gaussian:
        raise ValueError("sampling requires finite nu")


def sample_gamma(shape: float, rate: float, rng: np.random.Generator) -> float:
    """One draw from Gamma(shape, rate) with density proportional to
    x**(shape-1) * exp(-rate*x)."""
    if not shape > 0.0:
        raise ValueError(f"shape must be > 0, got {shape}")
    if not rate > 0.0:
        raise ValueError(f"rate must be > 0, got {rate}")
    return float(backend.kernels().sample_gamma(shape, rate, rng))


def sample_tau(y_full: np.ndarray, params: Params,
               rng: np.random.Generator) -> np.ndarray:
    """Draw all T-1 mixture weights conditional on the filled series.

    The weight for the transition into y[t] is Gamma((nu+1)/2,
    (residual^2/sigma2 + nu)/2) with residual y[t] - phi0 - phi1*y[t-1].
    """
    _require_sampling_params(params)
    y_full = np.ascontiguousarray(y_full, dtype=float)
    if y_full.size < 2 or not np.isfinite(y_full).all():
        raise ValueError("y_full must be a fully filled series of length >= 2")
    return backend.kernels().sample_tau(
        y_full, params.phi0, params.phi1, params.sigma2, params.nu, rng)


def block_conditional(block: MissingBlock, tau: np.ndarray, params: Params,
                      y_left: float, y_right: float) -> BlockConditional:
    """Conditional moments of one missing run given its two anchors.

    ``tau`` is the full weight vector (length T-1); the relevant segment is
    the block's transitions, ``tau[block.start : block.start + length + 1]``.
    """
    if not params.sigma2 > 0.0:
        raise ValueError("block conditional requires sigma2 > 0")
    tau = np.ascontiguousarray(tau, dtype=float)
    seg = tau[block.start:block.start + block.length + 1]
    if seg.size != block.length + 1:
        raise ValueError("tau does not cover the block's transitions")
    if not (seg > 0.0).all():
        raise ValueError("mixture weights must be strictly positive")
    mu, cov, chol = backend.kernels().block_moments(
        params.phi0, params.phi1, params.sigma2, seg,
        float(y_left), float(y_right))
    return BlockConditional(mu=mu, cov=cov, chol=chol)


def sample_missing(series: ObservedSeries, tau: np.ndarray, params: Params,
                   rng: np.random.Generator) -> np.ndarray:
    """Redraw every missing run given the weights; returns the fill values in
    index order. Observed positions are never touched."""
    _require_sampling_params(params)
    y = series.filled(np.zeros(series.n_missing))
    fills = []
    for block in series.blocks:
        cond = block_conditional(block, tau, params,
                                 y[block.start],
                                 y[block.start + block.length + 1])
        z = rng.standard_normal(block.length)
        fills.append(cond.mu + cond.chol @ z)
    if not fills:
        return np.empty(0)
    return np.concatenate(fills)


def gibbs_step(state: LatentState, series: ObservedSeries, params: Params,
               rng: np.random.Generator) -> LatentState:
    """One transition of the chain: draw the weights from the current fills,
    then redraw the missing runs from the new weights."""
    _require_sampling_params(params)
    if state.fills.size != series.n_missing:
        raise ValueError("state fills do not match the series' missing count")
    if state.tau.size != series.n - 1:
        raise ValueError("state tau must have length T-1")
    y = series.filled(state.fills)
    tau = state.tau.copy()
    starts, lens = _block_arrays(series)
    backend.kernels().gibbs_sweep(
        y, tau, starts, lens,
        params.phi0, params.phi1, params.sigma2, params.nu, rng)
    return LatentState(tau=tau, fills=y[~series.mask])


def _block_arrays(series: ObservedSeries) -> tuple[np.ndarray, np.ndarray]:
    starts = np.array([b.start for b in series.blocks], dtype=np.intp)
    lens = np.array([b.length for b in series.blocks], dtype=np.intp)
    return starts, lens
