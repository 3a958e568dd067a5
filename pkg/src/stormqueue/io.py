"""File formats and ingest preprocessing.

Two CSV formats are defined, both UTF-8 with LF endings and a one-line
format header before the column header:

events:  ``# stormqueue-events v1, tz_offset_minutes=<int>``
         ``region,failure_time,duration_hours``
         failure_time is local-naive ``YYYY-MM-DDTHH:MM`` (minute scale).

counts:  ``# stormqueue-counts v1, step_minutes=<int>, tz_offset_minutes=<int>``
         ``timestamp,region,count``

Preprocessing groups same-minute rows in one region into a single failed
entity (a burst counts as one dependent failure) whose duration is the
maximum over the burst, then drops entities with negative duration.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    CountSeries,
    Event,
    ModelError,
    RateSeries,
    RegionPartition,
    TimeGrid,
)

__all__ = [
    "FormatError",
    "RawEvent",
    "EventData",
    "PreprocessReport",
    "preprocess_events",
    "events_to_raw",
    "read_event_csv",
    "write_event_csv",
    "read_counts_csv",
    "write_counts_csv",
    "read_rate_csv",
    "write_rate_csv",
    "write_comparison_csv",
    "minutes_to_timestamp",
    "timestamp_to_minutes",
]

_EPOCH = datetime(1970, 1, 1)
_TS_FORMAT = "%Y-%m-%dT%H:%M"
_DURATION_DECIMALS = 6


class FormatError(ValueError):
    """Malformed file or row; message carries the line number when known."""


def timestamp_to_minutes(text: str) -> int:
    try:
        dt = datetime.strptime(text, _TS_FORMAT)
    except ValueError as exc:
        raise FormatError(f"bad timestamp {text!r}: {exc}") from None
    return int((dt - _EPOCH).total_seconds() // 60)


def minutes_to_timestamp(minutes: int) -> str:
    return (_EPOCH + timedelta(minutes=int(minutes))).strftime(_TS_FORMAT)


@dataclass(frozen=True)
class RawEvent:
    """One ingest row before preprocessing; duration may still be negative."""

    region: str
    time_minutes: int
    duration_hours: float
    line: int = -1


@dataclass(frozen=True)
class EventData:
    raws: tuple[RawEvent, ...]
    tz_offset_minutes: int
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class PreprocessReport:
    raw: int            # ingest rows
    grouped: int        # failed entities after burst collapse
    dropped: int        # entities removed for negative duration
    origin_minutes: int

    @property
    def entities(self) -> int:
        return self.grouped - self.dropped


def preprocess_events(
    raws: Iterable[RawEvent], origin_minutes: int | None = None
) -> tuple[list[Event], PreprocessReport]:
    """Collapse bursts, drop negative durations, convert to grid-relative hours.

    Rows sharing a region and failure minute merge into one entity whose
    duration is the burst maximum. Entities whose duration is negative
    are dropped afterwards and counted in the report. The origin defaults
    to the earliest surviving failure minute.
    """
    raws = list(raws)
    bursts: dict[tuple[str, int], float] = {}
    for r in raws:
        key = (r.region, r.time_minutes)
        if key not in bursts or r.duration_hours > bursts[key]:
            bursts[key] = r.duration_hours
    grouped = len(bursts)
    kept = {key: d for key, d in bursts.items() if d >= 0}
    dropped = grouped - len(kept)
    if origin_minutes is None:
        origin_minutes = min((t for _, t in kept), default=0)
    events = [
        Event(region, (t - origin_minutes) / 60.0, d)
        for (region, t), d in sorted(kept.items(), key=lambda kv: (kv[0][1], kv[0][0]))
    ]
    return events, PreprocessReport(len(raws), grouped, dropped, origin_minutes)


def events_to_raw(events: Iterable[Event], origin_minutes: int) -> list[RawEvent]:
    """Back-convert entities to ingest rows, quantizing times to the minute."""
    return [
        RawEvent(e.region, origin_minutes + round(e.time * 60.0), e.duration)
        for e in events
    ]


def _parse_header(line: str, fmt: str, keys: Sequence[str]) -> dict[str, int]:
    pattern = rf"^#\s*{re.escape(fmt)} v1\s*(,.*)?$"
    m = re.match(pattern, line.strip())
    if not m:
        raise FormatError(f"line 1: expected a '# {fmt} v1' header, got {line.strip()!r}")
    values: dict[str, int] = {}
    rest = (m.group(1) or "").lstrip(",")
    for part in filter(None, (p.strip() for p in rest.split(","))):
        if "=" not in part:
            raise FormatError(f"line 1: bad header field {part!r}")
        key, _, raw = part.partition("=")
        try:
            values[key.strip()] = int(raw.strip())
        except ValueError:
            raise FormatError(f"line 1: header field {key.strip()!r} must be an integer") from None
    missing = [k for k in keys if k not in values]
    if missing:
        raise FormatError(f"line 1: header missing {missing}")
    return values


def _read_table(path: Path, fmt: str, header_keys: Sequence[str], columns: Sequence[str]):
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FormatError(f"no such file: {path}") from None
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty file")
    meta = _parse_header(lines[0], fmt, header_keys)
    if len(lines) < 2:
        raise FormatError("missing column header")
    got = [c.strip() for c in lines[1].split(",")]
    if got != list(columns):
        raise FormatError(f"line 2: expected columns {list(columns)}, got {got}")
    reader = csv.reader(lines[2:])
    rows = [(i + 3, row) for i, row in enumerate(reader) if row]
    return meta, rows


def read_event_csv(path: str | Path, strict: bool = True) -> EventData:
    """Parse an events file; strict mode raises on the first malformed row."""
    meta, rows = _read_table(
        Path(path), "stormqueue-events", ["tz_offset_minutes"],
        ["region", "failure_time", "duration_hours"],
    )
    raws: list[RawEvent] = []
    warnings: list[str] = []
    for line_no, row in rows:
        try:
            if len(row) != 3:
                raise FormatError(f"line {line_no}: expected 3 fields, got {len(row)}")
            region = row[0].strip()
            if not region:
                raise FormatError(f"line {line_no}: empty region id")
            minutes = timestamp_to_minutes(row[1].strip())
            try:
                duration = float(row[2])
            except ValueError:
                raise FormatError(f"line {line_no}: bad duration {row[2]!r}") from None
            if not math.isfinite(duration):
                raise FormatError(f"line {line_no}: non-finite duration")
            raws.append(RawEvent(region, minutes, duration, line_no))
        except FormatError as exc:
            if strict:
                raise
            warnings.append(str(exc))
    return EventData(tuple(raws), meta["tz_offset_minutes"], tuple(warnings))


def write_event_csv(
    path: str | Path,
    events: Iterable[Event],
    origin_minutes: int,
    tz_offset_minutes: int,
) -> None:
    """Write entities at the declared precision: minutes for times, 1e-6 h durations."""
    lines = [
        f"# stormqueue-events v1, tz_offset_minutes={tz_offset_minutes}",
        "region,failure_time,duration_hours",
    ]
    for e in events:
        stamp = minutes_to_timestamp(origin_minutes + round(e.time * 60.0))
        lines.append(f"{e.region},{stamp},{e.duration:.{_DURATION_DECIMALS}f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_counts_csv(path: str | Path) -> tuple[CountSeries, int]:
    """Parse aggregated counts into a CountSeries plus the declared UTC offset.

    Every region must report the same, uniformly spaced, strictly
    increasing timestamps matching the declared step.
    """
    meta, rows = _read_table(
        Path(path), "stormqueue-counts", ["step_minutes", "tz_offset_minutes"],
        ["timestamp", "region", "count"],
    )
    step_minutes = meta["step_minutes"]
    if step_minutes <= 0:
        raise FormatError("step_minutes must be positive")
    per_region: dict[str, list[tuple[int, int]]] = {}
    for line_no, row in rows:
        if len(row) != 3:
            raise FormatError(f"line {line_no}: expected 3 fields, got {len(row)}")
        minutes = timestamp_to_minutes(row[0].strip())
        region = row[1].strip()
        if not region:
            raise FormatError(f"line {line_no}: empty region id")
        try:
            count = int(row[2])
        except ValueError:
            raise FormatError(f"line {line_no}: bad count {row[2]!r}") from None
        if count < 0:
            raise FormatError(f"line {line_no}: negative count {count}")
        per_region.setdefault(region, []).append((minutes, count))
    if not per_region:
        raise FormatError("counts file has no data rows")
    regions = tuple(per_region)
    first = [m for m, _ in per_region[regions[0]]]
    for region, series in per_region.items():
        stamps = [m for m, _ in series]
        diffs = [b - a for a, b in zip(stamps, stamps[1:])]
        if any(d <= 0 for d in diffs):
            raise FormatError(f"non-monotone timestamps for region {region!r}")
        if any(d != step_minutes for d in diffs):
            raise FormatError(
                f"region {region!r} samples are not on the declared {step_minutes}-minute step"
            )
        if stamps != first:
            raise FormatError(f"region {region!r} timestamps differ from {regions[0]!r}")
    grid = TimeGrid(first[0], step_minutes / 60.0, len(first))
    counts = np.array([[c for _, c in per_region[r]] for r in regions], dtype=np.int64)
    return CountSeries(grid, RegionPartition(regions)), meta["tz_offset_minutes"]


def write_counts_csv(path: str | Path, counts: CountSeries, tz_offset_minutes: int) -> None:
    grid = counts.grid
    step_minutes = grid.step_hours * 60.0
    if abs(step_minutes - round(step_minutes)) > 1e-9:
        raise FormatError("counts files need a whole-minute grid step")
    lines = [
        f"# stormqueue-counts v1, step_minutes={round(step_minutes)}, "
        f"tz_offset_minutes={tz_offset_minutes}",
        "timestamp,region,count",
    ]
    stamps = [
        minutes_to_timestamp(grid.origin_minutes + i * round(step_minutes))
        for i in range(grid.count)
    ]
    for j, region in enumerate(counts.partition.ids):
        for i, stamp in enumerate(stamps):
            lines.append(f"{stamp},{region},{int(counts.counts[j, i])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_rate_csv(path: str | Path) -> tuple[RateSeries, int]:
    meta, rows = _read_table(
        Path(path), "stormqueue-rates", ["origin_minutes", "tz_offset_minutes"],
        ["time_hours", "region", "rate_per_hour"],
    )
    per_region: dict[str, list[tuple[float, float]]] = {}
    for line_no, row in rows:
        if len(row) != 3:
            raise FormatError(f"line {line_no}: expected 3 fields, got {len(row)}")
        try:
            t = float(row[0])
            rate = float(row[2])
        except ValueError:
            raise FormatError(f"line {line_no}: bad numeric field") from None
        region = row[1].strip()
        if rate < 0:
            raise FormatError(f"line {line_no}: negative rate")
        per_region.setdefault(region, []).append((t, rate))
    if not per_region:
        raise FormatError("rates file has no data rows")
    regions = tuple(per_region)
    times = np.array([t for t, _ in per_region[regions[0]]])
    if len(times) < 2:
        raise FormatError("rate series needs at least two samples")
    steps = np.diff(times)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, steps[0]):
        raise FormatError("rate samples must be uniformly spaced and increasing")
    for region, series in per_region.items():
        if not np.allclose([t for t, _ in series], times, rtol=0, atol=1e-9):
            raise FormatError(f"region {region!r} time axis differs from {regions[0]!r}")
    grid = TimeGrid(meta["origin_minutes"], float(steps[0]), len(times))
    values = np.array([[r for _, r in per_region[reg]] for reg in regions])
    return RateSeries(grid, RegionPartition(regions), values), meta["tz_offset_minutes"]


def write_rate_csv(path: str | Path, series: RateSeries, tz_offset_minutes: int) -> None:
    lines = [
        f"# stormqueue-rates v1, origin_minutes={series.grid.origin_minutes}, "
        f"tz_offset_minutes={tz_offset_minutes}",
        "time_hours,region,rate_per_hour",
    ]
    times = series.grid.times()
    for j, region in enumerate(series.partition.ids):
        for i, t in enumerate(times):
            lines.append(f"{t:.9g},{region},{series.values[j, i]:.9g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_comparison_csv(
    path: str | Path,
    grid: TimeGrid,
    rows_by_region: dict[str, tuple[np.ndarray, np.ndarray]],
) -> None:
    """Reconstruction comparison: time, region, empirical, reconstructed, residual."""
    lines = [
        f"# stormqueue-comparison v1, origin_minutes={grid.origin_minutes}",
        "time_hours,region,empirical,reconstructed,residual",
    ]
    times = grid.times()
    for region, (empirical, reconstructed) in rows_by_region.items():
        for i, t in enumerate(times):
            resid = reconstructed[i] - empirical[i]
            lines.append(
                f"{t:.9g},{region},{empirical[i]:.9g},{reconstructed[i]:.9g},{resid:.9g}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
