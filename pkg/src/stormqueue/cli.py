"""Command-line front end.

Subcommands: simulate | fit | reconstruct | infer-aggregated | report.
Every command is deterministic given its inputs and seed, never mutates
its inputs, and writes outputs only under --out. Exit codes: 0 success,
1 finished with fit-quality warnings, 2 input error.

Plot emission is data-only CSV/JSON; rendering is left to external tools.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aggregated import (
    aggregate_regions,
    cumulative_bounds,
    fit_stationary_weibull_ls,
    lower_bound_rates,
)
from .core import (
    CountSeries,
    ModelError,
    PiecewiseDurationModel,
    RateSeries,
    RegionPartition,
    TimeGrid,
    infant_recovery_prob,
)
from .fitting import (
    FitConfig,
    FitError,
    fit_geo_piecewise,
    fit_piecewise,
    model_from_dict,
    model_to_dict,
    save_model,
)
from .io import (
    FormatError,
    preprocess_events,
    read_counts_csv,
    read_event_csv,
    read_rate_csv,
    write_comparison_csv,
    write_counts_csv,
    write_event_csv,
    write_rate_csv,
)
from .rates import failure_rate_from_events, recovery_rate_from_events
from .reconstruct import (
    path_distance,
    reconstruct_active_failures,
    recovery_rate_from_model,
)
from .scenarios import ScenarioConfigError, build_scenario, load_scenario_config
from .simulate import build_counting_paths, simulate_events

EXIT_OK = 0
EXIT_WARNINGS = 1
EXIT_INPUT_ERROR = 2

_INPUT_ERRORS = (FormatError, ScenarioConfigError, ModelError, FitError, OSError)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_INPUT_ERROR


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _ensure_out(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_intervals(text: str | None, span: float) -> list[tuple[float, float]]:
    if text is None:
        bounds = list(np.linspace(0.0, span, 6))
    else:
        try:
            bounds = [float(tok) for tok in text.split(",")]
        except ValueError:
            raise FitError(f"bad --intervals value {text!r}; expected comma-separated hours")
        if len(bounds) < 2 or any(b <= a for a, b in zip(bounds, bounds[1:])):
            raise FitError("--intervals must be at least two strictly increasing values")
    return list(zip(bounds[:-1], bounds[1:]))


def _components_arg(text: str) -> int | str:
    if text == "select":
        return "select"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"--components must be an integer or 'select', got {text!r}"
        )


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        cfg = load_scenario_config(args.config)
        config_bytes = Path(args.config).read_bytes()
        spec, meta = build_scenario(cfg, seed_override=args.seed)
    except _INPUT_ERRORS as exc:
        return _fail(str(exc))

    events = simulate_events(spec)
    out = _ensure_out(args.out)
    write_event_csv(out / "events.csv", events, spec.grid.origin_minutes, meta.tz_offset_minutes)
    provenance = {
        "config_sha256": hashlib.sha256(config_bytes).hexdigest(),
        "seed": spec.seed,
        "tool_version": __version__,
    }
    truth = {
        "provenance": provenance,
        "grid": {
            "origin_minutes": spec.grid.origin_minutes,
            "step_hours": spec.grid.step_hours,
            "count": spec.grid.count,
        },
        "regions": list(spec.partition.ids),
        "failure_rates": {
            rid: [float(v) for v in spec.rates[j]]
            for j, rid in enumerate(spec.partition.ids)
        },
        "duration_model": model_to_dict(spec.durations),
        "n_events": len(events),
    }
    _write_json(out / "true_params.json", truth)
    print(f"simulated {len(events)} events into {out / 'events.csv'}")
    return EXIT_OK


def _infant_summary(model: PiecewiseDurationModel, threshold: float) -> list[dict]:
    rows = []
    regions = [None] if model.regions is None else list(model.regions)
    for j, region in enumerate(regions):
        for i, (s, e) in enumerate(model.intervals):
            p = infant_recovery_prob(model, i, region, threshold)
            rows.append(
                {
                    "region": region if region is not None else "all",
                    "interval": [s, e],
                    "infant_recovery": p,
                    "aging_recovery": 1.0 - p,
                }
            )
    return rows


def cmd_fit(args: argparse.Namespace) -> int:
    try:
        data = read_event_csv(args.events, strict=not args.lenient)
        events, report = preprocess_events(data.raws)
        if not events:
            return _fail("no usable entities after preprocessing")
        max_failure = max(e.time for e in events)
        max_recovery = max(e.recovery_time for e in events)
        span = max(max_failure + args.tau, max_recovery)
        count = int(np.ceil(span / args.step)) + 1
        grid = TimeGrid(report.origin_minutes, args.step, count)
        partition = RegionPartition(tuple(sorted({e.region for e in events})))
        intervals = _parse_intervals(args.intervals, max_failure)
        if intervals[-1][1] < max_failure:
            return _fail(
                f"--intervals end at {intervals[-1][1]} but failures run to {max_failure}"
            )
        cfg = FitConfig(
            component_count=args.components,
            seed=args.seed,
            restart_count=args.restarts,
            region_floor=args.region_floor,
        )

        failure_rate = failure_rate_from_events(events, args.tau, grid, partition)
        recovery_rate = recovery_rate_from_events(events, args.tau, grid, partition)
        temporal = fit_piecewise(events, intervals, cfg)
        geo = fit_geo_piecewise(events, intervals, partition, cfg)
    except _INPUT_ERRORS as exc:
        return _fail(str(exc))

    out = _ensure_out(args.out)
    save_model(out / "model.json", temporal.model)
    save_model(out / "model_geo.json", geo.model)
    write_rate_csv(out / "rates_failure.csv", failure_rate, data.tz_offset_minutes)
    write_rate_csv(out / "rates_recovery.csv", recovery_rate, data.tz_offset_minutes)

    # hourly failure histogram next to the smoothed rate, for plotting
    onsets = np.array([e.time for e in events])
    hour_edges = np.arange(0.0, np.ceil(max_failure) + 1.0)
    hist, _ = np.histogram(onsets, bins=hour_edges)
    grid_times = grid.times()
    network_rate = failure_rate.total()
    lines = ["time_hours,failures_per_hour_bin,network_failure_rate"]
    for i, left in enumerate(hour_edges[:-1]):
        nearest = int(np.argmin(np.abs(grid_times - (left + 0.5))))
        lines.append(f"{left:.9g},{int(hist[i])},{network_rate[nearest]:.9g}")
    (out / "fig_histfr.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    warnings: list[str] = list(data.warnings)
    for fit in temporal.fits:
        if not fit.converged:
            warnings.append("temporal fit did not converge; best iterate kept")
    for cell, fit in geo.fits.items():
        if not fit.converged:
            warnings.append(f"geo fit {cell} did not converge; best iterate kept")
    summary = {
        "preprocessing": {
            "raw_rows": report.raw,
            "burst_groups": report.grouped,
            "negative_duration_dropped": report.dropped,
            "entities": report.entities,
            "origin_minutes": report.origin_minutes,
        },
        "temporal_intervals": [[s, e] for s, e in temporal.model.intervals],
        "infant_recovery_by_interval": _infant_summary(temporal.model, args.threshold),
        "infant_recovery_by_region": _infant_summary(geo.model, args.threshold),
        "excluded_regions": geo.excluded,
        "time_invariant_regions": list(geo.time_invariant),
        "threshold_hours": args.threshold,
        "warnings": warnings,
    }
    _write_json(out / "summary.json", summary)
    for region, n in geo.excluded.items():
        print(f"note: region {region} excluded ({n} samples below floor "
              f"{args.region_floor})")
    print(f"fit {report.entities} entities; models in {out}")
    if warnings:
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
        return EXIT_WARNINGS
    return EXIT_OK


def cmd_reconstruct(args: argparse.Namespace) -> int:
    try:
        failure_rate, tz = read_rate_csv(args.rates)
        if args.recovery_rates is not None:
            recovery_rate, _ = read_rate_csv(args.recovery_rates)
            if recovery_rate.grid != failure_rate.grid:
                return _fail("failure and recovery rate grids differ")
            if recovery_rate.partition != failure_rate.partition:
                return _fail("failure and recovery rate regions differ")
            model = None
        else:
            if args.model is None:
                return _fail("either --model or --recovery-rates is required")
            doc = json.loads(Path(args.model).read_text(encoding="utf-8"))
            model = model_from_dict(doc)
            recovery_rate = recovery_rate_from_model(failure_rate, model)
        data = read_event_csv(args.events, strict=not args.lenient)
        events, report = preprocess_events(
            data.raws, origin_minutes=failure_rate.grid.origin_minutes
        )
        known = set(failure_rate.partition.ids)
        skipped = [e for e in events if e.region not in known]
        events = [e for e in events if e.region in known]
        paths = build_counting_paths(events, failure_rate.grid, failure_rate.partition)
    except _INPUT_ERRORS as exc:
        return _fail(str(exc))
    except json.JSONDecodeError as exc:
        return _fail(f"bad model JSON: {exc}")

    result = reconstruct_active_failures(failure_rate, recovery_rate)
    out = _ensure_out(args.out)
    comparison: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    metrics: dict[str, dict[str, float]] = {}
    for j, region in enumerate(failure_rate.partition.ids):
        empirical = paths.active.counts[j].astype(float)
        comparison[region] = (empirical, result.values[j])
        metrics[region] = path_distance(result.values[j], empirical)
    total_empirical = paths.active.total().astype(float)
    total_reconstructed = result.values.sum(axis=0)
    comparison["network"] = (total_empirical, total_reconstructed)
    metrics["network"] = path_distance(total_reconstructed, total_empirical)

    write_comparison_csv(out / "comparison.csv", failure_rate.grid, comparison)
    write_comparison_csv(
        out / "fig_frp.csv", failure_rate.grid, {"network": comparison["network"]}
    )
    warnings = result.warnings()
    if skipped:
        warnings.append(
            f"{len(skipped)} entities in regions absent from the rate series were ignored"
        )
    _write_json(
        out / "metrics.json",
        {"metrics": metrics, "entities": report.entities, "warnings": warnings},
    )
    print(
        f"network peak_ratio={metrics['network']['peak_ratio']:.3f} "
        f"rmse={metrics['network']['rmse']:.3f}"
    )
    if warnings:
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
        return EXIT_WARNINGS
    return EXIT_OK


def cmd_infer_aggregated(args: argparse.Namespace) -> int:
    try:
        counts, tz = read_counts_csv(args.counts)
    except _INPUT_ERRORS as exc:
        return _fail(str(exc))

    failure_bound, recovery_bound = lower_bound_rates(counts)
    network_failure = aggregate_regions(failure_bound)
    network_recovery = aggregate_regions(recovery_bound)
    fit = fit_stationary_weibull_ls(network_failure, network_recovery)
    cum_f, cum_r = cumulative_bounds(failure_bound, recovery_bound)

    out = _ensure_out(args.out)
    write_rate_csv(out / "rates_failure_lower.csv", failure_bound, tz)
    write_rate_csv(out / "rates_recovery_lower.csv", recovery_bound, tz)
    times = counts.grid.times()
    lines = ["time_hours,network_failure_lower,network_recovery_lower,"
             "network_cumulative_failures,network_cumulative_recoveries"]
    for i, t in enumerate(times):
        lines.append(
            f"{t:.9g},{network_failure.values[0, i]:.9g},"
            f"{network_recovery.values[0, i]:.9g},"
            f"{cum_f.sum(axis=0)[i]:.9g},{cum_r.sum(axis=0)[i]:.9g}"
        )
    (out / "fig_sandy_rates.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    payload = {
        "shape": fit.shape,
        "scale": fit.scale,
        "objective": fit.objective,
        "objective_active_span": fit.objective_active,
        "degenerate": fit.degenerate,
        "regions": list(counts.partition.ids),
    }
    _write_json(out / "stationary_weibull.json", payload)
    print(f"stationary Weibull fit: shape={fit.shape:.4f} scale={fit.scale:.4f}")
    if fit.degenerate:
        print("warning: recovery bound is identically zero; fit is degenerate",
              file=sys.stderr)
        return EXIT_WARNINGS
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        doc = json.loads(Path(args.model).read_text(encoding="utf-8"))
        model = model_from_dict(doc)
    except _INPUT_ERRORS as exc:
        return _fail(str(exc))
    except json.JSONDecodeError as exc:
        return _fail(f"bad model JSON: {exc}")

    rows = _infant_summary(model, args.threshold)
    header = f"{'region':>10}  {'interval (h)':>18}  {'infant %':>9}  {'aging %':>9}"
    print(header)
    print("-" * len(header))
    for row in rows:
        s, e = row["interval"]
        print(
            f"{row['region']:>10}  {f'[{s:g}, {e:g})':>18}  "
            f"{100 * row['infant_recovery']:>8.1f}%  {100 * row['aging_recovery']:>8.1f}%"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stormqueue",
        description="Nonstationary failure-recovery analytics for outage data",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic outage history")
    p.add_argument("--config", required=True, help="scenario TOML or JSON")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate rates and duration mixtures from events")
    p.add_argument("events", help="events CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=5.0, help="moving-average half-width, hours")
    p.add_argument("--step", type=float, default=0.25, help="grid step, hours")
    p.add_argument("--intervals", default=None,
                   help="comma-separated interval boundaries in hours from the first failure")
    p.add_argument("--components", type=_components_arg, default="select")
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--region-floor", type=int, default=40)
    p.add_argument("--threshold", type=float, default=24.0,
                   help="infant-recovery threshold, hours")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lenient", action="store_true",
                   help="skip malformed rows instead of failing")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reconstruct", help="rebuild the active-failure path from a model")
    p.add_argument("--model", default=None, help="duration model JSON")
    p.add_argument("--rates", required=True, help="failure-rate CSV")
    p.add_argument("--events", required=True, help="events CSV for the empirical path")
    p.add_argument("--recovery-rates", default=None,
                   help="use this recovery-rate CSV instead of convolving the model")
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("infer-aggregated",
                       help="rate lower bounds and a stationary Weibull from counts")
    p.add_argument("counts", help="aggregated counts CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer_aggregated)

    p = sub.add_parser("report", help="plain-text infant/aging summary for a model")
    p.add_argument("model", help="duration model JSON")
    p.add_argument("--threshold", type=float, default=24.0)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
