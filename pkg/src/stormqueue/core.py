"""Domain types and Weibull mixture math shared by every other module.

Time convention: instants are floats in hours measured from a grid origin,
and the origin itself is an integer count of minutes since the Unix epoch
so CSV timestamps round-trip at minute precision. Durations are hours.

Every container here is immutable after construction; all operations are
pure, so instances can be shared freely across threads.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ModelError",
    "ZERO_DURATION_CLAMP",
    "TimeGrid",
    "RegionPartition",
    "Event",
    "WeibullComponent",
    "WeibullMixture",
    "PiecewiseDurationModel",
    "RateSeries",
    "CountSeries",
    "weibull_pdf",
    "weibull_cdf",
    "mixture_cdf",
    "infant_recovery_prob",
    "aging_recovery_prob",
    "group_by_region",
]

# Durations at (or rounded to) zero are evaluated at this lag so that
# densities with shape < 1 stay finite. Hours.
ZERO_DURATION_CLAMP = 1e-6

_WEIGHT_SUM_TOL = 1e-9
_WEIGHT_RENORM_TOL = 1e-6
_INTERVAL_GAP_TOL = 1e-9


class ModelError(ValueError):
    """Invalid construction or lookup on a domain object."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid.

    origin_minutes: absolute anchor, minutes since the Unix epoch.
    step_hours:     spacing between grid points, hours.
    count:          number of grid points; point i sits at i * step_hours.
    """

    origin_minutes: int
    step_hours: float
    count: int

    def __post_init__(self) -> None:
        if self.step_hours <= 0:
            raise ModelError(f"grid step must be positive, got {self.step_hours}")
        if self.count < 1:
            raise ModelError(f"grid needs at least one point, got {self.count}")

    @property
    def span_hours(self) -> float:
        """Distance from the first to the last grid point."""
        return (self.count - 1) * self.step_hours

    def times(self) -> np.ndarray:
        """Grid points in hours from the origin."""
        return np.arange(self.count) * self.step_hours

    def timestamps_minutes(self) -> np.ndarray:
        return self.origin_minutes + self.times() * 60.0

    def contains(self, t: float, tol: float = 1e-9) -> bool:
        return -tol <= t <= self.span_hours + tol


@dataclass(frozen=True)
class RegionPartition:
    """Ordered set of region identifiers with optional display names."""

    ids: tuple[str, ...]
    display_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.ids) < 1:
            raise ModelError("partition needs at least one region")
        if len(set(self.ids)) != len(self.ids):
            raise ModelError(f"duplicate region ids in {self.ids}")
        if self.display_names is not None and len(self.display_names) != len(self.ids):
            raise ModelError("display_names length does not match ids")
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "_index", {rid: i for i, rid in enumerate(self.ids)})

    def __len__(self) -> int:
        return len(self.ids)

    def index(self, region_id: str) -> int:
        try:
            return self._index[region_id]  # type: ignore[attr-defined]
        except KeyError:
            raise ModelError(f"unknown region id {region_id!r}") from None

    def name(self, region_id: str) -> str:
        if self.display_names is None:
            return region_id
        return self.display_names[self.index(region_id)]


@dataclass(frozen=True, order=True)
class Event:
    """One failed entity: where it failed, when, and for how long."""

    region: str
    time: float
    duration: float

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ModelError(f"negative duration {self.duration} (drop it in preprocessing)")

    @property
    def recovery_time(self) -> float:
        return self.time + self.duration


@dataclass(frozen=True)
class WeibullComponent:
    """Single Weibull component with its mixing weight."""

    shape: float
    scale: float
    weight: float

    def __post_init__(self) -> None:
        if not (self.shape > 0 and math.isfinite(self.shape)):
            raise ModelError(f"shape must be a positive finite number, got {self.shape}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ModelError(f"scale must be a positive finite number, got {self.scale}")
        if not (0 < self.weight <= 1):
            raise ModelError(f"weight must be in (0, 1], got {self.weight}")


def weibull_pdf(d, shape: float, scale: float):
    """Weibull density in events per hour.

    At d = 0 the density is 0 for shape > 1 and 1/scale for shape = 1;
    for shape < 1 it is evaluated at ZERO_DURATION_CLAMP instead of
    diverging.
    """
    if not (shape > 0 and scale > 0):
        raise ModelError(f"shape and scale must be positive, got {shape}, {scale}")
    arr = np.asarray(d, dtype=float)
    if np.any(arr < 0):
        raise ModelError("durations must be nonnegative")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr).astype(float, copy=True)
    if shape < 1.0:
        arr[arr < ZERO_DURATION_CLAMP] = ZERO_DURATION_CLAMP
    with np.errstate(divide="ignore", over="ignore"):
        if shape == 1.0:
            log_pdf = -math.log(scale) - arr / scale
        else:
            log_ratio = np.log(arr / scale)
            log_pdf = (
                math.log(shape / scale)
                + (shape - 1.0) * log_ratio
                - np.exp(shape * log_ratio)
            )
        out = np.exp(log_pdf)
    return float(out[0]) if scalar else out


def weibull_cdf(d, shape: float, scale: float):
    """Weibull distribution function, exact at d = 0 (no clamping)."""
    if not (shape > 0 and scale > 0):
        raise ModelError(f"shape and scale must be positive, got {shape}, {scale}")
    arr = np.asarray(d, dtype=float)
    if np.any(arr < 0):
        raise ModelError("durations must be nonnegative")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    with np.errstate(divide="ignore", over="ignore"):
        power = np.exp(shape * np.log(arr / scale))
        out = -np.expm1(-power)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class WeibullMixture:
    """Weighted Weibull components, stored sorted by ascending scale.

    Weights must sum to 1 within 1e-9; sums off by at most 1e-6 are
    renormalized silently, anything worse is rejected unless the caller
    opts into renormalization via ``from_params``.
    """

    components: tuple[WeibullComponent, ...]

    def __post_init__(self) -> None:
        if not self.components:
            raise ModelError("mixture needs at least one component")
        comps = tuple(sorted(self.components, key=lambda c: (c.scale, c.shape)))
        total = math.fsum(c.weight for c in comps)
        if abs(total - 1.0) > _WEIGHT_RENORM_TOL:
            raise ModelError(f"mixture weights sum to {total!r}, not 1")
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            comps = tuple(
                WeibullComponent(c.shape, c.scale, c.weight / total) for c in comps
            )
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_params(
        cls, rows: Iterable[tuple[float, float, float]], renormalize: bool = False
    ) -> "WeibullMixture":
        """Build from (shape, scale, weight) triples.

        With renormalize=True any positive weight total is rescaled to 1,
        which published parameter tables rounded to few digits need.
        """
        rows = list(rows)
        if renormalize:
            total = math.fsum(r[2] for r in rows)
            if total <= 0:
                raise ModelError("weights must have a positive sum")
            rows = [(k, g, w / total) for k, g, w in rows]
        return cls(tuple(WeibullComponent(k, g, w) for k, g, w in rows))

    def __len__(self) -> int:
        return len(self.components)

    def pdf(self, d):
        parts = [c.weight * weibull_pdf(d, c.shape, c.scale) for c in self.components]
        return sum(parts[1:], start=parts[0])

    def cdf(self, d):
        parts = [c.weight * weibull_cdf(d, c.shape, c.scale) for c in self.components]
        return sum(parts[1:], start=parts[0])

    def mean(self) -> float:
        return math.fsum(
            c.weight * c.scale * math.gamma(1.0 + 1.0 / c.shape) for c in self.components
        )


def mixture_cdf(mixture: WeibullMixture, d):
    """P{duration < d} under the mixture."""
    return mixture.cdf(d)


@dataclass(frozen=True)
class PiecewiseDurationModel:
    """Duration mixtures indexed by failure-time interval and region.

    intervals: ordered, contiguous [start, end) pairs in hours; the last
               interval also owns its right endpoint.
    regions:   region ids, or None for a region-invariant model.
    mixtures:  (interval index, region index) -> WeibullMixture; the
               region index is 0 when regions is None.
    """

    intervals: tuple[tuple[float, float], ...]
    mixtures: Mapping[tuple[int, int], WeibullMixture]
    regions: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        ivals = tuple((float(s), float(e)) for s, e in self.intervals)
        if not ivals:
            raise ModelError("model needs at least one interval")
        for s, e in ivals:
            if not e > s:
                raise ModelError(f"empty interval [{s}, {e})")
        for (_, prev_end), (start, _) in zip(ivals, ivals[1:]):
            if abs(start - prev_end) > _INTERVAL_GAP_TOL:
                raise ModelError(
                    f"intervals must be contiguous; gap between {prev_end} and {start}"
                )
        n_regions = 1 if self.regions is None else len(self.regions)
        if self.regions is not None and len(set(self.regions)) != n_regions:
            raise ModelError("duplicate region ids")
        missing = [
            (i, j)
            for i in range(len(ivals))
            for j in range(n_regions)
            if (i, j) not in self.mixtures
        ]
        if missing:
            raise ModelError(f"missing mixtures for cells {missing}")
        object.__setattr__(self, "intervals", ivals)
        object.__setattr__(self, "mixtures", MappingProxyType(dict(self.mixtures)))
        if self.regions is not None:
            object.__setattr__(self, "regions", tuple(self.regions))

    @property
    def start(self) -> float:
        return self.intervals[0][0]

    @property
    def end(self) -> float:
        return self.intervals[-1][1]

    def covers(self, lo: float, hi: float, tol: float = 1e-9) -> bool:
        return self.start - tol <= lo and hi <= self.end + tol

    def interval_index(self, t: float) -> int:
        """Index of the interval owning failure time t."""
        if not self.covers(t, t):
            raise ModelError(f"time {t} outside model span [{self.start}, {self.end}]")
        starts = [s for s, _ in self.intervals]
        idx = bisect.bisect_right(starts, t) - 1
        return max(0, min(idx, len(self.intervals) - 1))

    def _region_index(self, region: str | None) -> int:
        if self.regions is None:
            # region-invariant model: any region sees the same mixtures
            return 0
        if region is None:
            raise ModelError("region id required for a per-region model")
        try:
            return self.regions.index(region)
        except ValueError:
            raise ModelError(f"unknown region id {region!r}") from None

    def mixture_for(self, interval_index: int, region: str | None = None) -> WeibullMixture:
        j = self._region_index(region)
        try:
            return self.mixtures[(interval_index, j)]
        except KeyError:
            raise ModelError(f"no mixture for cell ({interval_index}, {j})") from None

    def mixture_at(self, t: float, region: str | None = None) -> WeibullMixture:
        return self.mixture_for(self.interval_index(t), region)


def infant_recovery_prob(
    model: PiecewiseDurationModel,
    interval_index: int,
    region: str | None = None,
    threshold: float = 24.0,
) -> float:
    """Probability that a failure in the given cell recovers within threshold hours."""
    if threshold <= 0:
        raise ModelError(f"threshold must be positive, got {threshold}")
    return float(model.mixture_for(interval_index, region).cdf(threshold))


def aging_recovery_prob(
    model: PiecewiseDurationModel,
    interval_index: int,
    region: str | None = None,
    threshold: float = 24.0,
) -> float:
    return 1.0 - infant_recovery_prob(model, interval_index, region, threshold)


def _as_region_matrix(values, n_regions: int, count: int, dtype) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.shape != (n_regions, count):
        raise ModelError(
            f"values shape {arr.shape} does not match ({n_regions} regions, {count} points)"
        )
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RateSeries:
    """Per-region rate function sampled on a uniform grid, events per hour."""

    grid: TimeGrid
    partition: RegionPartition
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = _as_region_matrix(self.values, len(self.partition), self.grid.count, float)
        if np.any(arr < 0):
            raise ModelError("rates must be nonnegative")
        if not np.all(np.isfinite(arr)):
            raise ModelError("rates must be finite")
        object.__setattr__(self, "values", arr)

    def region_values(self, region_id: str) -> np.ndarray:
        return self.values[self.partition.index(region_id)]

    def total(self) -> np.ndarray:
        """Network-wide rate: pointwise sum over regions."""
        return self.values.sum(axis=0)


@dataclass(frozen=True)
class CountSeries:
    """Per-region counts of simultaneously failed entities on a uniform grid."""

    grid: TimeGrid
    partition: RegionPartition
    counts: np.ndarray

    def __post_init__(self) -> None:
        arr = _as_region_matrix(self.counts, len(self.partition), self.grid.count, np.int64)
        if np.any(arr < 0):
            raise ModelError("counts must be nonnegative")
        object.__setattr__(self, "counts", arr)

    def region_counts(self, region_id: str) -> np.ndarray:
        return self.counts[self.partition.index(region_id)]

    def total(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def group_by_region(
    events: Iterable[Event], partition: RegionPartition
) -> dict[str, list[Event]]:
    """Bucket events by region, rejecting ids missing from the partition."""
    buckets: dict[str, list[Event]] = {rid: [] for rid in partition.ids}
    for ev in events:
        if ev.region not in buckets:
            raise ModelError(f"event region {ev.region!r} not in partition")
        buckets[ev.region].append(ev)
    return buckets
