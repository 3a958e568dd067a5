"""Centered moving-average estimation of time-varying event rates.

Each event spreads unit mass uniformly over a window extending tau hours
to either side; the sampled rate at an interior grid point equals the
classic differenced estimator (events within (t - tau, t + tau]) / (2 tau).
Windows colliding with the grid span are truncated and renormalized by
their actual width, which keeps the total integrated rate equal to the
event count exactly, for any event set and tau; trapezoidal integration of
the sampled series reproduces that total to float precision.
"""
from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .core import (
    Event,
    ModelError,
    RateSeries,
    RegionPartition,
    TimeGrid,
    group_by_region,
)

__all__ = [
    "moving_average_rate",
    "recovery_rate_from_events",
    "cumulative_from_rate",
    "extend_grid",
    "extend_rate_series",
]


def _bin_edges(grid: TimeGrid) -> np.ndarray:
    """Edges of bins centered on the grid points, covering the span exactly."""
    t = grid.times()
    if grid.count == 1:
        return np.array([t[0], t[0]])
    return np.concatenate(([t[0]], 0.5 * (t[:-1] + t[1:]), [t[-1]]))


def _window_mass_profile(
    epochs: np.ndarray, tau: float, lo_bound: float, hi_bound: float, edges: np.ndarray
) -> np.ndarray:
    """Cumulative spread mass at each bin edge.

    Each epoch contributes a uniform density 1/width on its window
    [epoch - tau, epoch + tau] clipped to [lo_bound, hi_bound].
    """
    lo = np.maximum(epochs - tau, lo_bound)
    hi = np.minimum(epochs + tau, hi_bound)
    width = hi - lo
    if np.any(width <= 0):
        raise ModelError("window truncated to nothing; grid must span the data")
    inv = 1.0 / width

    def ramp(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
        # sum_i w_i * max(edge - p_i, 0) evaluated at every edge
        order = np.argsort(points)
        p, w = points[order], weights[order]
        cw = np.concatenate(([0.0], np.cumsum(w)))
        cpw = np.concatenate(([0.0], np.cumsum(w * p)))
        k = np.searchsorted(p, edges, side="right")
        return edges * cw[k] - cpw[k]

    return ramp(lo, inv) - ramp(hi, inv)


def moving_average_rate(
    epochs_by_region: Mapping[str, Sequence[float] | np.ndarray],
    tau: float,
    grid: TimeGrid,
    partition: RegionPartition,
) -> RateSeries:
    """Moving-average rate of the given epochs, per region.

    tau is the half-width of the averaging window in hours and must be at
    least the grid step, otherwise the estimator degenerates into a bare
    histogram and is rejected.
    """
    if tau <= 0:
        raise ModelError(f"tau must be positive, got {tau}")
    if tau < grid.step_hours:
        raise ModelError(
            f"tau={tau} is below the grid step {grid.step_hours}; "
            "a window narrower than one step is just a histogram"
        )
    if grid.count < 2:
        raise ModelError("rate estimation needs a grid with at least two points")
    edges = _bin_edges(grid)
    widths = np.diff(edges)
    values = np.zeros((len(partition), grid.count))
    span = grid.span_hours
    for j, region in enumerate(partition.ids):
        epochs = np.asarray(epochs_by_region.get(region, ()), dtype=float)
        if epochs.size == 0:
            continue
        if epochs.min() < -1e-9 or epochs.max() > span + 1e-9:
            raise ModelError(f"epochs outside grid span in region {region!r}")
        mass = _window_mass_profile(epochs, tau, 0.0, span, edges)
        values[j] = np.maximum(np.diff(mass), 0.0) / widths
    return RateSeries(grid, partition, values)


def recovery_rate_from_events(
    events: Iterable[Event],
    tau: float,
    grid: TimeGrid,
    partition: RegionPartition,
) -> RateSeries:
    """Moving-average rate of recovery epochs (failure time + duration).

    Entities that have not recovered by the end of the grid are excluded;
    they contribute no recovery within the observation window.
    """
    buckets = group_by_region(events, partition)
    span = grid.span_hours
    epochs = {
        region: [e.recovery_time for e in evs if e.recovery_time <= span + 1e-9]
        for region, evs in buckets.items()
    }
    return moving_average_rate(epochs, tau, grid, partition)


def failure_rate_from_events(
    events: Iterable[Event],
    tau: float,
    grid: TimeGrid,
    partition: RegionPartition,
) -> RateSeries:
    """Moving-average rate of failure onsets."""
    buckets = group_by_region(events, partition)
    epochs = {region: [e.time for e in evs] for region, evs in buckets.items()}
    return moving_average_rate(epochs, tau, grid, partition)


def cumulative_from_rate(rate: RateSeries) -> np.ndarray:
    """Trapezoidal cumulative integral of the rate, one row per region."""
    return cumulative_trapezoid(rate.values, dx=rate.grid.step_hours, axis=1, initial=0.0)


def extend_grid(grid: TimeGrid, extra_hours: float) -> TimeGrid:
    """Grid prolonged past its end by at least extra_hours."""
    if extra_hours < 0:
        raise ModelError("extra_hours must be nonnegative")
    extra_points = int(np.ceil(extra_hours / grid.step_hours))
    return TimeGrid(grid.origin_minutes, grid.step_hours, grid.count + extra_points)


def extend_rate_series(series: RateSeries, extra_hours: float) -> RateSeries:
    """Zero-pad a rate series past its end, e.g. to follow recoveries out."""
    grid = extend_grid(series.grid, extra_hours)
    values = np.zeros((len(series.partition), grid.count))
    values[:, : series.grid.count] = series.values
    return RateSeries(grid, series.partition, values)
