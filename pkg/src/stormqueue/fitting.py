"""Maximum-likelihood fitting of Weibull mixture duration models.

The fit is classic EM. The E-step computes responsibilities in log space;
the M-step updates each component by solving the weighted Weibull score
equation with bracketed root-finding in the shape, after which the scale
has a closed form. Observed-data log-likelihood is nondecreasing across
iterations, which the tests assert.

Piecewise fits run one EM per failure-time interval (and per region for
the geographic variant), merging or falling back when an interval is too
thin to support the parameter count.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .core import (
    Event,
    ModelError,
    PiecewiseDurationModel,
    RegionPartition,
    WeibullComponent,
    WeibullMixture,
    ZERO_DURATION_CLAMP,
)

__all__ = [
    "FitError",
    "FitConfig",
    "MixtureFit",
    "PiecewiseFitResult",
    "GeoFitResult",
    "sample_floor",
    "fit_weibull_mixture",
    "fit_piecewise",
    "fit_geo_piecewise",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

SHAPE_BRACKET = (0.05, 60.0)
SHAPE_XTOL = 1e-10
_COLLAPSE_WEIGHT = 1e-4
_EULER_GAMMA = 0.5772156649015329


class FitError(RuntimeError):
    """Fit cannot proceed: too few samples or a degenerate configuration."""


def sample_floor(n_components: int) -> int:
    """Minimum sample count to fit an l-component mixture (5x parameter count)."""
    return 5 * (3 * n_components - 1)


@dataclass(frozen=True)
class FitConfig:
    """Knobs for mixture fitting.

    component_count is either an explicit component count or "select",
    which scans 1..max_components and keeps the best BIC.
    """

    component_count: int | str = "select"
    max_components: int = 3
    max_iterations: int = 500
    tolerance: float = 1e-8
    restart_count: int = 1
    seed: int = 0
    fixed_shape: float | None = None
    region_floor: int = 40

    def __post_init__(self) -> None:
        if self.tolerance <= 0:
            raise FitError(f"tolerance must be positive, got {self.tolerance}")
        if self.restart_count < 1:
            raise FitError(f"need at least one restart, got {self.restart_count}")
        if isinstance(self.component_count, str):
            if self.component_count != "select":
                raise FitError(f"unknown component mode {self.component_count!r}")
            if self.max_components < 1:
                raise FitError("max_components must be at least 1")
        elif self.component_count < 1:
            raise FitError(f"component count must be at least 1, got {self.component_count}")

    def candidate_counts(self, n_samples: int) -> list[int]:
        if isinstance(self.component_count, int):
            candidates = [self.component_count]
        else:
            candidates = list(range(1, self.max_components + 1))
        allowed = [l for l in candidates if n_samples >= sample_floor(l)]
        if not allowed:
            raise FitError(
                f"{n_samples} samples is below the floor "
                f"{sample_floor(min(candidates))} for {min(candidates)} component(s)"
            )
        return allowed


@dataclass(frozen=True)
class MixtureFit:
    """Fitted mixture with its likelihood trace and convergence status."""

    mixture: WeibullMixture
    log_likelihood: float
    converged: bool
    iterations: int
    n_samples: int
    log_likelihood_history: tuple[float, ...]

    @property
    def n_parameters(self) -> int:
        return 3 * len(self.mixture) - 1

    @property
    def bic(self) -> float:
        return self.n_parameters * math.log(self.n_samples) - 2.0 * self.log_likelihood


def _log_pdf_matrix(log_d: np.ndarray, d: np.ndarray, shapes, scales) -> np.ndarray:
    """log Weibull densities, components x samples."""
    shapes = shapes[:, None]
    scales = scales[:, None]
    log_ratio = log_d[None, :] - np.log(scales)
    with np.errstate(over="ignore"):
        return (
            np.log(shapes / scales)
            + (shapes - 1.0) * log_ratio
            - np.exp(shapes * log_ratio)
        )


def _weighted_weibull_mle(
    d: np.ndarray,
    log_d: np.ndarray,
    weights: np.ndarray,
    fixed_shape: float | None = None,
) -> tuple[float, float]:
    """Weighted Weibull MLE: root-find the shape score, scale closed-form."""
    total = weights.sum()
    if total <= 0:
        raise FitError("component lost all responsibility mass")
    mean_log = float(weights @ log_d) / total

    def weighted_log_moment(k: float) -> float:
        # E_w[log d] under the d^k tilting, stabilized against overflow
        z = k * log_d
        z = z - z.max()
        tilt = weights * np.exp(z)
        return float(tilt @ log_d) / tilt.sum()

    def score(k: float) -> float:
        return 1.0 / k + mean_log - weighted_log_moment(k)

    lo, hi = SHAPE_BRACKET
    if fixed_shape is not None:
        shape = fixed_shape
    else:
        s_lo, s_hi = score(lo), score(hi)
        if s_lo <= 0.0:
            shape = lo
        elif s_hi >= 0.0:
            shape = hi
        else:
            shape = float(brentq(score, lo, hi, xtol=SHAPE_XTOL))
    z = shape * log_d
    z_max = z.max()
    log_power_mean = (
        math.log(float(weights @ np.exp(z - z_max))) + z_max - math.log(total)
    )
    scale = math.exp(log_power_mean / shape)
    return shape, scale


@dataclass
class _EmState:
    weights: np.ndarray
    shapes: np.ndarray
    scales: np.ndarray


def _initial_state(d: np.ndarray, n_components: int, rng: np.random.Generator | None) -> _EmState:
    """Quantile split of log-durations, Gumbel method-of-moments per group.

    Deterministic when rng is None (first restart); later restarts jitter
    the starting point multiplicatively.
    """
    groups = np.array_split(np.sort(d), n_components)
    shapes, scales, weights = [], [], []
    lo, hi = SHAPE_BRACKET
    for g in groups:
        logs = np.log(g)
        sigma = float(np.std(logs))
        if sigma < 1e-12:
            k0 = hi * 0.8
        else:
            k0 = math.pi / (math.sqrt(6.0) * sigma)
        k0 = min(max(k0, lo), hi)
        g0 = math.exp(float(np.mean(logs)) + _EULER_GAMMA / k0)
        shapes.append(k0)
        scales.append(g0)
        weights.append(len(g) / len(d))
    state = _EmState(np.array(weights), np.array(shapes), np.array(scales))
    if rng is not None:
        state.shapes = np.clip(state.shapes * np.exp(rng.normal(0.0, 0.25, n_components)), lo, hi)
        state.scales = state.scales * np.exp(rng.normal(0.0, 0.5, n_components))
    return state


def _run_em(
    d: np.ndarray,
    log_d: np.ndarray,
    state: _EmState,
    cfg: FitConfig,
) -> MixtureFit:
    history: list[float] = []
    iterations = 0
    converged = False
    previous = None
    while iterations < cfg.max_iterations:
        iterations += 1
        log_comp = np.log(state.weights)[:, None] + _log_pdf_matrix(
            log_d, d, state.shapes, state.scales
        )
        log_mix = logsumexp(log_comp, axis=0)
        ll = float(np.sum(log_mix))
        history.append(ll)
        if previous is not None and abs(ll - previous) < cfg.tolerance:
            converged = True
            break
        previous = ll

        resp = np.exp(log_comp - log_mix[None, :])
        dead = ~np.isfinite(log_mix)
        if np.any(dead):
            resp[:, dead] = 1.0 / len(state.weights)
        mass = resp.sum(axis=1)
        new_weights = mass / len(d)
        if np.any(new_weights < _COLLAPSE_WEIGHT) and len(new_weights) > 1:
            keep = new_weights >= _COLLAPSE_WEIGHT
            state = _EmState(
                state.weights[keep] / state.weights[keep].sum(),
                state.shapes[keep],
                state.scales[keep],
            )
            # restart the trace: the reduced model is a fresh fit
            history = []
            previous = None
            continue
        shapes = np.empty(len(mass))
        scales = np.empty(len(mass))
        for c in range(len(mass)):
            shapes[c], scales[c] = _weighted_weibull_mle(
                d, log_d, resp[c], fixed_shape=cfg.fixed_shape
            )
        state = _EmState(new_weights, shapes, scales)

    if not history:
        log_comp = np.log(state.weights)[:, None] + _log_pdf_matrix(
            log_d, d, state.shapes, state.scales
        )
        history.append(float(np.sum(logsumexp(log_comp, axis=0))))

    mixture = WeibullMixture.from_params(
        zip(state.shapes, state.scales, state.weights), renormalize=True
    )
    return MixtureFit(
        mixture=mixture,
        log_likelihood=history[-1],
        converged=converged,
        iterations=iterations,
        n_samples=len(d),
        log_likelihood_history=tuple(history),
    )


def _fit_fixed_count(d: np.ndarray, log_d: np.ndarray, n_components: int, cfg: FitConfig) -> MixtureFit:
    streams = np.random.SeedSequence(cfg.seed).spawn(max(cfg.restart_count - 1, 0))
    best: MixtureFit | None = None
    for restart in range(cfg.restart_count):
        rng = None if restart == 0 else np.random.default_rng(streams[restart - 1])
        state = _initial_state(d, n_components, rng)
        fit = _run_em(d, log_d, state, cfg)
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
    assert best is not None
    return best


def fit_weibull_mixture(durations: Sequence[float] | np.ndarray, cfg: FitConfig) -> MixtureFit:
    """Fit a Weibull mixture to observed durations (hours).

    Zero durations are clamped to ZERO_DURATION_CLAMP before fitting;
    negative ones are rejected. In "select" mode every viable component
    count is fitted and the best BIC wins.
    """
    d = np.sort(np.asarray(durations, dtype=float))
    if d.size and d[0] < 0:
        raise FitError("durations must be nonnegative")
    d = np.maximum(d, ZERO_DURATION_CLAMP)
    candidates = cfg.candidate_counts(d.size)
    log_d = np.log(d)
    fits = [_fit_fixed_count(d, log_d, l, cfg) for l in candidates]
    if len(fits) == 1:
        return fits[0]
    return min(fits, key=lambda f: f.bic)


def _interval_counts(times: np.ndarray, intervals: Sequence[tuple[float, float]]) -> list[np.ndarray]:
    """Sample masks per interval; the last interval owns its right endpoint."""
    masks = []
    for idx, (s, e) in enumerate(intervals):
        if idx == len(intervals) - 1:
            masks.append((times >= s) & (times <= e))
        else:
            masks.append((times >= s) & (times < e))
    return masks


def _merge_thin_intervals(
    intervals: list[tuple[float, float]],
    counts: list[int],
    floor: int,
) -> list[tuple[float, float]]:
    """Merge intervals below the sample floor into the temporally nearer neighbor."""
    intervals = list(intervals)
    counts = list(counts)
    while len(intervals) > 1 and min(counts) < floor:
        i = int(np.argmin(counts))
        if i == 0:
            target = 1
        elif i == len(intervals) - 1:
            target = i - 1
        else:
            center = 0.5 * (intervals[i][0] + intervals[i][1])
            prev_center = 0.5 * (intervals[i - 1][0] + intervals[i - 1][1])
            next_center = 0.5 * (intervals[i + 1][0] + intervals[i + 1][1])
            target = i - 1 if center - prev_center <= next_center - center else i + 1
        lo_idx, hi_idx = min(i, target), max(i, target)
        intervals[lo_idx] = (intervals[lo_idx][0], intervals[hi_idx][1])
        counts[lo_idx] = counts[lo_idx] + counts[hi_idx]
        del intervals[hi_idx]
        del counts[hi_idx]
    if counts[0] < floor and len(intervals) == 1:
        raise FitError(
            f"only {counts[0]} samples remain after merging; floor is {floor}"
        )
    return intervals


def _cell_seeds(seed: int, n_cells: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(max(n_cells, 1))]


@dataclass(frozen=True)
class PiecewiseFitResult:
    model: PiecewiseDurationModel
    fits: tuple[MixtureFit, ...]
    requested_intervals: tuple[tuple[float, float], ...]


def fit_piecewise(
    events: Iterable[Event],
    intervals: Sequence[tuple[float, float]],
    cfg: FitConfig,
) -> PiecewiseFitResult:
    """Region-aggregated piecewise fit: one independent mixture per interval.

    Intervals whose sample count is below the floor for the smallest
    candidate component count get merged into the temporally nearer
    neighbor before fitting.
    """
    events = list(events)
    intervals = [(float(s), float(e)) for s, e in intervals]
    times = np.array([e.time for e in events]) if events else np.empty(0)
    durations = np.array([e.duration for e in events]) if events else np.empty(0)
    masks = _interval_counts(times, intervals)
    covered = np.zeros(times.size, dtype=bool)
    for m in masks:
        covered |= m
    if not np.all(covered):
        bad = times[~covered]
        raise FitError(f"failure times outside every interval, e.g. t={bad[0]}")

    min_candidate = (
        cfg.component_count if isinstance(cfg.component_count, int) else 1
    )
    floor = sample_floor(min_candidate)
    merged = _merge_thin_intervals(intervals, [int(m.sum()) for m in masks], floor)
    masks = _interval_counts(times, merged)

    seeds = _cell_seeds(cfg.seed, len(merged))
    fits = []
    mixtures = {}
    for idx, mask in enumerate(masks):
        cell_cfg = replace(cfg, seed=seeds[idx])
        fit = fit_weibull_mixture(durations[mask], cell_cfg)
        fits.append(fit)
        mixtures[(idx, 0)] = fit.mixture
    model = PiecewiseDurationModel(tuple(merged), mixtures, regions=None)
    return PiecewiseFitResult(model, tuple(fits), tuple(intervals))


@dataclass(frozen=True)
class GeoFitResult:
    model: PiecewiseDurationModel
    fits: dict[tuple[int, int], MixtureFit]
    excluded: dict[str, int]            # region id -> sample count, below floor
    time_invariant: tuple[str, ...]     # regions fitted with one pooled mixture


def fit_geo_piecewise(
    events: Iterable[Event],
    intervals: Sequence[tuple[float, float]],
    partition: RegionPartition,
    cfg: FitConfig,
) -> GeoFitResult:
    """Per-region piecewise fit.

    Regions with fewer than cfg.region_floor samples are excluded and
    reported. A kept region whose per-interval cells cannot all meet the
    sample floor falls back to a single time-invariant mixture reused
    across all intervals.
    """
    events = list(events)
    intervals = [(float(s), float(e)) for s, e in intervals]
    by_region = {rid: [] for rid in partition.ids}
    for ev in events:
        if ev.region not in by_region:
            raise ModelError(f"event region {ev.region!r} not in partition")
        by_region[ev.region].append(ev)

    kept = [rid for rid in partition.ids if len(by_region[rid]) >= cfg.region_floor]
    excluded = {
        rid: len(by_region[rid])
        for rid in partition.ids
        if len(by_region[rid]) < cfg.region_floor
    }
    if not kept:
        raise FitError(
            f"no region reaches the sample floor of {cfg.region_floor}"
        )

    min_candidate = (
        cfg.component_count if isinstance(cfg.component_count, int) else 1
    )
    floor = sample_floor(min_candidate)
    seeds = _cell_seeds(cfg.seed, len(intervals) * len(kept) + len(kept))
    mixtures = {}
    fits: dict[tuple[int, int], MixtureFit] = {}
    time_invariant = []
    for j, rid in enumerate(kept):
        times = np.array([e.time for e in by_region[rid]])
        durations = np.array([e.duration for e in by_region[rid]])
        masks = _interval_counts(times, intervals)
        if not np.all(np.logical_or.reduce(masks)):
            raise FitError(f"failure times outside every interval in region {rid!r}")
        if all(int(m.sum()) >= floor for m in masks):
            for idx, mask in enumerate(masks):
                cell_cfg = replace(cfg, seed=seeds[j * len(intervals) + idx])
                fit = fit_weibull_mixture(durations[mask], cell_cfg)
                fits[(idx, j)] = fit
                mixtures[(idx, j)] = fit.mixture
        else:
            pooled_cfg = replace(cfg, seed=seeds[len(intervals) * len(kept) + j])
            fit = fit_weibull_mixture(durations, pooled_cfg)
            time_invariant.append(rid)
            for idx in range(len(intervals)):
                fits[(idx, j)] = fit
                mixtures[(idx, j)] = fit.mixture
    model = PiecewiseDurationModel(tuple(intervals), mixtures, regions=tuple(kept))
    return GeoFitResult(model, fits, excluded, tuple(time_invariant))


MODEL_FORMAT = "stormqueue-model"
MODEL_VERSION = 1


def model_to_dict(model: PiecewiseDurationModel) -> dict:
    """Versioned JSON-ready document for a piecewise duration model."""
    cells = []
    n_regions = 1 if model.regions is None else len(model.regions)
    for i in range(len(model.intervals)):
        for j in range(n_regions):
            mix = model.mixtures[(i, j)]
            cells.append(
                {
                    "interval": i,
                    "region": None if model.regions is None else model.regions[j],
                    "components": [
                        {"shape": c.shape, "scale": c.scale, "weight": c.weight}
                        for c in mix.components
                    ],
                }
            )
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "intervals": [[s, e] for s, e in model.intervals],
        "regions": None if model.regions is None else list(model.regions),
        "mixtures": cells,
    }


def model_from_dict(doc: dict) -> PiecewiseDurationModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ModelError(f"not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported model version {doc.get('version')!r}")
    intervals = tuple((float(s), float(e)) for s, e in doc["intervals"])
    regions = doc.get("regions")
    region_index = {} if regions is None else {rid: j for j, rid in enumerate(regions)}
    mixtures = {}
    for cell in doc["mixtures"]:
        j = 0 if cell.get("region") is None else region_index[cell["region"]]
        mixtures[(int(cell["interval"]), j)] = WeibullMixture(
            tuple(
                WeibullComponent(c["shape"], c["scale"], c["weight"])
                for c in cell["components"]
            )
        )
    return PiecewiseDurationModel(
        intervals, mixtures, regions=None if regions is None else tuple(regions)
    )


def save_model(path: str | Path, model: PiecewiseDurationModel) -> None:
    Path(path).write_text(
        json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_model(path: str | Path) -> PiecewiseDurationModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
