"""Rate inference from aggregated outage counts.

When only the number of simultaneously failed entities is reported per
interval, signed increments still bound the underlying rates from below:
a count can only rise by at least that many new failures and fall by at
least that many recoveries. Failures and recoveries co-occurring inside
one reporting bin cancel, which is exactly why these are lower bounds.

A single stationary Weibull duration distribution is then recovered by
least squares: pick the (shape, scale) whose convolution with the failure
lower bound best reproduces the recovery lower bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.signal import fftconvolve

from .core import (
    CountSeries,
    ModelError,
    RateSeries,
    RegionPartition,
    WeibullMixture,
)

__all__ = [
    "lower_bound_rates",
    "aggregate_regions",
    "stationary_recovery_forward",
    "StationaryWeibullFit",
    "fit_stationary_weibull_ls",
    "cumulative_bounds",
]

SHAPE_BOUNDS = (0.05, 60.0)
SCALE_BOUNDS = (1e-3, 1e4)
_GRID_POINTS = 32


def lower_bound_rates(counts: CountSeries) -> tuple[RateSeries, RateSeries]:
    """Split signed count increments into failure and recovery rate lower bounds.

    A positive increment of the active-failure count contributes to the
    failure bound at that bin, the magnitude of a negative increment to
    the recovery bound. The first grid point has no increment and gets 0.
    """
    step = counts.grid.step_hours
    diff = np.diff(counts.counts.astype(float), axis=1)
    zeros = np.zeros((counts.counts.shape[0], 1))
    failure = np.hstack([zeros, np.clip(diff, 0.0, None)]) / step
    recovery = np.hstack([zeros, np.clip(-diff, 0.0, None)]) / step
    return (
        RateSeries(counts.grid, counts.partition, failure),
        RateSeries(counts.grid, counts.partition, recovery),
    )


def aggregate_regions(series: RateSeries | Sequence[RateSeries]) -> RateSeries:
    """Network-wide rate: pointwise sum over all regions of all inputs."""
    if isinstance(series, RateSeries):
        bundle = [series]
    else:
        bundle = list(series)
        if not bundle:
            raise ModelError("nothing to aggregate")
    grid = bundle[0].grid
    for s in bundle[1:]:
        if s.grid != grid:
            raise ModelError("cannot aggregate rate series on different grids")
    total = np.zeros(grid.count)
    for s in bundle:
        total += s.total()
    return RateSeries(grid, RegionPartition(("network",)), total[np.newaxis, :])


def _weibull_lag_density(count: int, step: float, shape: float, scale: float) -> np.ndarray:
    """Density at lags 0, step, 2*step, ..., zero lag clamped to step/2."""
    lags = np.arange(count) * step
    if count > 0:
        lags[0] = step / 2.0
    with np.errstate(divide="ignore", over="ignore"):
        log_ratio = np.log(lags / scale)
        log_pdf = (
            math.log(shape / scale)
            + (shape - 1.0) * log_ratio
            - np.exp(shape * log_ratio)
        )
        return np.exp(log_pdf)


def stationary_recovery_forward(
    failure_rate: np.ndarray, step: float, shape: float, scale: float
) -> np.ndarray:
    """Discrete convolution of a failure rate with one Weibull duration density.

    This is the forward model the least-squares fit inverts; it is public
    so synthetic recovery bounds can be generated from known parameters.
    """
    failure_rate = np.asarray(failure_rate, dtype=float)
    kernel = _weibull_lag_density(failure_rate.size, step, shape, scale)
    out = fftconvolve(failure_rate, kernel)[: failure_rate.size] * step
    return np.maximum(out, 0.0)


@dataclass(frozen=True)
class StationaryWeibullFit:
    shape: float
    scale: float
    objective: float          # squared L2 over the full grid
    objective_active: float   # same restricted to bins where either bound is nonzero
    degenerate: bool          # the recovery bound was identically zero

    def mixture(self) -> WeibullMixture:
        return WeibullMixture.from_params([(self.shape, self.scale, 1.0)])


def fit_stationary_weibull_ls(
    failure_bound: RateSeries, recovery_bound: RateSeries
) -> StationaryWeibullFit:
    """Least-squares stationary Weibull fit to lower-bound rate series.

    Multi-region inputs are aggregated first. The objective is the
    unweighted squared L2 distance over the whole grid; a deterministic
    coarse log-grid scan seeds a Nelder-Mead refinement in log parameters.
    """
    if failure_bound.grid != recovery_bound.grid:
        raise ModelError("failure and recovery bounds live on different grids")
    step = failure_bound.grid.step_hours
    fl = failure_bound.total()
    rl = recovery_bound.total()
    if not np.any(fl > 0):
        raise ModelError("failure bound is identically zero; nothing to deconvolve")
    degenerate = not np.any(rl > 0)
    active = (fl > 0) | (rl > 0)

    def objective(log_params: np.ndarray) -> float:
        shape = math.exp(log_params[0])
        scale = math.exp(log_params[1])
        if not (SHAPE_BOUNDS[0] <= shape <= SHAPE_BOUNDS[1]):
            return math.inf
        if not (SCALE_BOUNDS[0] <= scale <= SCALE_BOUNDS[1]):
            return math.inf
        resid = stationary_recovery_forward(fl, step, shape, scale) - rl
        return float(resid @ resid)

    shapes = np.geomspace(*SHAPE_BOUNDS, _GRID_POINTS)
    scales = np.geomspace(*SCALE_BOUNDS, _GRID_POINTS)
    best = None
    for k in shapes:
        for g in scales:
            val = objective(np.log([k, g]))
            if best is None or val < best[0]:
                best = (val, k, g)
    assert best is not None
    x0 = np.log([best[1], best[2]])
    result = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "xatol": 1e-7,
            "fatol": max(best[0] * 1e-12, 1e-30),
            "maxiter": 2000,
        },
    )
    log_k, log_g = (result.x if result.fun <= best[0] else x0)
    final = objective(np.array([log_k, log_g]))
    resid = (
        stationary_recovery_forward(fl, step, math.exp(log_k), math.exp(log_g)) - rl
    )
    active_obj = float(resid[active] @ resid[active]) if np.any(active) else 0.0
    return StationaryWeibullFit(
        shape=math.exp(log_k),
        scale=math.exp(log_g),
        objective=final,
        objective_active=active_obj,
        degenerate=degenerate,
    )


def cumulative_bounds(
    failure_bound: RateSeries, recovery_bound: RateSeries
) -> tuple[np.ndarray, np.ndarray]:
    """Rectangle-rule cumulative failure and recovery counts, per region.

    Built so that their difference reproduces the count increments
    exactly: cumulative_failures - cumulative_recoveries is the observed
    count profile shifted to start at zero.
    """
    if failure_bound.grid != recovery_bound.grid:
        raise ModelError("bounds live on different grids")
    step = failure_bound.grid.step_hours
    return (
        np.cumsum(failure_bound.values * step, axis=1),
        np.cumsum(recovery_bound.values * step, axis=1),
    )
