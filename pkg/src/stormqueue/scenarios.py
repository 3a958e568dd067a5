"""Scenario configs: TOML/JSON documents describing a synthetic storm.

A scenario fixes the grid, the regions with their failure-rate profiles
(either explicit piecewise-linear breakpoints or a triangular bell plus a
baseline), and the piecewise duration mixtures. Validation errors carry
the path of the offending key.
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .core import (
    PiecewiseDurationModel,
    RegionPartition,
    TimeGrid,
    WeibullComponent,
    WeibullMixture,
)
from .io import timestamp_to_minutes
from .simulate import ScenarioSpec

__all__ = [
    "ScenarioConfigError",
    "ScenarioMeta",
    "load_scenario_config",
    "build_scenario",
    "load_scenario",
    "bundled_config_path",
]


class ScenarioConfigError(ValueError):
    """Config validation failure; the message names the offending key."""


from dataclasses import dataclass


@dataclass(frozen=True)
class ScenarioMeta:
    tz_offset_minutes: int
    name: str


def bundled_config_path(name: str = "ike_like") -> Path:
    """Filesystem path of a demo config shipped with the package."""
    return Path(resources.files("stormqueue") / "configs" / f"{name}.toml")


def load_scenario_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ScenarioConfigError(f"no such config file: {path}")
    if path.suffix.lower() == ".json":
        return json.loads(path.read_text(encoding="utf-8"))
    with path.open("rb") as fh:
        return tomllib.load(fh)


def _require(cfg: dict, key: str, kind, path: str):
    if key not in cfg:
        raise ScenarioConfigError(f"{path}.{key}: missing required key")
    value = cfg[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ScenarioConfigError(f"{path}.{key}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, kind):
        raise ScenarioConfigError(
            f"{path}.{key}: expected {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _region_rate(entry: dict, times: np.ndarray, path: str) -> np.ndarray:
    has_bell = "peak_rate" in entry
    has_breakpoints = "rate_breakpoints" in entry
    if has_bell == has_breakpoints:
        raise ScenarioConfigError(
            f"{path}: give either peak_rate/peak_time/width_hours or rate_breakpoints"
        )
    if has_breakpoints:
        pts = entry["rate_breakpoints"]
        if not isinstance(pts, list) or not pts:
            raise ScenarioConfigError(f"{path}.rate_breakpoints: expected a nonempty list")
        knots, values = [], []
        for i, pair in enumerate(pts):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ScenarioConfigError(
                    f"{path}.rate_breakpoints[{i}]: expected [time, rate]"
                )
            t, r = float(pair[0]), float(pair[1])
            if r < 0:
                raise ScenarioConfigError(f"{path}.rate_breakpoints[{i}]: negative rate")
            if knots and t <= knots[-1]:
                raise ScenarioConfigError(
                    f"{path}.rate_breakpoints[{i}]: times must increase"
                )
            knots.append(t)
            values.append(r)
        return np.interp(times, knots, values)
    peak = _require(entry, "peak_rate", float, path)
    center = _require(entry, "peak_time", float, path)
    width = _require(entry, "width_hours", float, path)
    base = float(entry.get("base_rate", 0.0))
    if peak < 0 or base < 0:
        raise ScenarioConfigError(f"{path}: rates must be nonnegative")
    if width <= 0:
        raise ScenarioConfigError(f"{path}.width_hours: must be positive")
    bell = peak * np.clip(1.0 - np.abs(times - center) / (width / 2.0), 0.0, None)
    return base + bell


def _mixture(components: Any, path: str) -> WeibullMixture:
    if not isinstance(components, list) or not components:
        raise ScenarioConfigError(f"{path}: expected a nonempty list of [shape, scale, weight]")
    rows = []
    for i, row in enumerate(components):
        if not (isinstance(row, list) and len(row) == 3):
            raise ScenarioConfigError(f"{path}[{i}]: expected [shape, scale, weight]")
        try:
            rows.append(WeibullComponent(float(row[0]), float(row[1]), float(row[2])))
        except ValueError as exc:
            raise ScenarioConfigError(f"{path}[{i}]: {exc}") from None
    try:
        return WeibullMixture(tuple(rows))
    except ValueError as exc:
        raise ScenarioConfigError(f"{path}: {exc}") from None


def build_scenario(
    cfg: dict, seed_override: int | None = None
) -> tuple[ScenarioSpec, ScenarioMeta]:
    """Validate a config document and assemble the simulation spec."""
    grid_cfg = _require(cfg, "grid", dict, "$")
    origin_raw = _require(grid_cfg, "origin", object, "grid")
    if isinstance(origin_raw, str):
        origin_minutes = timestamp_to_minutes(origin_raw)
    elif isinstance(origin_raw, int) and not isinstance(origin_raw, bool):
        origin_minutes = origin_raw
    else:
        raise ScenarioConfigError(
            "grid.origin: expected 'YYYY-MM-DDTHH:MM' or integer minutes"
        )
    step = _require(grid_cfg, "step_hours", float, "grid")
    span = _require(grid_cfg, "span_hours", float, "grid")
    if step <= 0:
        raise ScenarioConfigError("grid.step_hours: must be positive")
    if span < step:
        raise ScenarioConfigError("grid.span_hours: must cover at least one step")
    count = int(round(span / step)) + 1
    grid = TimeGrid(origin_minutes, step, count)
    tz = int(grid_cfg.get("tz_offset_minutes", 0))

    regions_cfg = _require(cfg, "region", list, "$")
    if not regions_cfg:
        raise ScenarioConfigError("region: at least one region required")
    ids = []
    names = []
    rates = np.zeros((len(regions_cfg), count))
    times = grid.times()
    for j, entry in enumerate(regions_cfg):
        if not isinstance(entry, dict):
            raise ScenarioConfigError(f"region[{j}]: expected a table")
        rid = _require(entry, "id", str, f"region[{j}]")
        if rid in ids:
            raise ScenarioConfigError(f"region[{j}].id: duplicate region id {rid!r}")
        ids.append(rid)
        names.append(str(entry.get("name", rid)))
        rates[j] = _region_rate(entry, times, f"region[{j}]")
    partition = RegionPartition(tuple(ids), tuple(names))

    dur_cfg = _require(cfg, "durations", dict, "$")
    boundaries = _require(dur_cfg, "boundaries", list, "durations")
    if len(boundaries) < 2:
        raise ScenarioConfigError("durations.boundaries: need at least two values")
    bounds = [float(b) for b in boundaries]
    if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
        raise ScenarioConfigError("durations.boundaries: must strictly increase")
    if bounds[0] > 1e-9 or bounds[-1] < grid.span_hours - 1e-9:
        raise ScenarioConfigError(
            f"durations.boundaries: must cover [0, {grid.span_hours}]"
        )
    intervals = tuple(zip(bounds[:-1], bounds[1:]))

    rows = _require(dur_cfg, "mixture", list, "durations")
    per_region = any(isinstance(r, dict) and "region" in r for r in rows)
    defaults: dict[int, WeibullMixture] = {}
    specific: dict[tuple[int, str], WeibullMixture] = {}
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            raise ScenarioConfigError(f"durations.mixture[{i}]: expected a table")
        idx = _require(row, "interval", int, f"durations.mixture[{i}]")
        if not 1 <= idx <= len(intervals):
            raise ScenarioConfigError(
                f"durations.mixture[{i}].interval: must be in 1..{len(intervals)}"
            )
        mix = _mixture(row.get("components"), f"durations.mixture[{i}].components")
        if "region" in row:
            rid = row["region"]
            if rid not in ids:
                raise ScenarioConfigError(
                    f"durations.mixture[{i}].region: unknown region {rid!r}"
                )
            specific[(idx - 1, rid)] = mix
        else:
            if idx - 1 in defaults:
                raise ScenarioConfigError(
                    f"durations.mixture[{i}]: duplicate default for interval {idx}"
                )
            defaults[idx - 1] = mix

    mixtures: dict[tuple[int, int], WeibullMixture] = {}
    if per_region:
        for i in range(len(intervals)):
            for j, rid in enumerate(ids):
                mix = specific.get((i, rid), defaults.get(i))
                if mix is None:
                    raise ScenarioConfigError(
                        f"durations: no mixture for interval {i + 1}, region {rid!r}"
                    )
                mixtures[(i, j)] = mix
        model = PiecewiseDurationModel(intervals, mixtures, regions=tuple(ids))
    else:
        for i in range(len(intervals)):
            if i not in defaults:
                raise ScenarioConfigError(f"durations: no mixture for interval {i + 1}")
            mixtures[(i, 0)] = defaults[i]
        model = PiecewiseDurationModel(intervals, mixtures, regions=None)

    seed = seed_override if seed_override is not None else int(cfg.get("seed", 0))
    spec = ScenarioSpec(grid, partition, rates, model, seed)
    return spec, ScenarioMeta(tz, str(cfg.get("name", "scenario")))


def load_scenario(
    path: str | Path, seed_override: int | None = None
) -> tuple[ScenarioSpec, ScenarioMeta]:
    return build_scenario(load_scenario_config(path), seed_override)
