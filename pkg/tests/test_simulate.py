import numpy as np
import pytest
from scipy.stats import chi2, kstest

from stormqueue import (
    Event,
    ModelError,
    PiecewiseDurationModel,
    RegionPartition,
    ScenarioSpec,
    TimeGrid,
    WeibullMixture,
    build_counting_paths,
    load_scenario,
    simulate_durations,
    simulate_events,
    simulate_failures,
)
from stormqueue.io import events_to_raw, preprocess_events
from stormqueue.scenarios import bundled_config_path

ONE_REGION = RegionPartition(("A",))


def flat_model(span: float, rows=((1.0, 2.0, 1.0),)) -> PiecewiseDurationModel:
    return PiecewiseDurationModel(
        ((0.0, span),), {(0, 0): WeibullMixture.from_params(rows)}
    )


def constant_spec(rate: float, span: float, seed: int, step: float = 0.25) -> ScenarioSpec:
    grid = TimeGrid(0, step, int(round(span / step)) + 1)
    values = np.full((1, grid.count), rate)
    return ScenarioSpec(grid, ONE_REGION, values, flat_model(span), seed)


class TestSimulateFailures:
    def test_zero_rate_yields_nothing(self):
        spec = constant_spec(0.0, 50.0, seed=1)
        assert simulate_failures(spec)["A"].size == 0

    def test_constant_rate_poisson_moments(self):
        # oracle: Poisson(rate * span) mean; 200 seeds, 3-sigma band
        seeds = range(200)
        counts = [
            simulate_failures(constant_spec(10.0, 100.0, seed=s))["A"].size
            for s in seeds
        ]
        mean = np.mean(counts)
        assert abs(mean - 1000.0) <= 3.0 * np.sqrt(1000.0) / np.sqrt(len(counts))
        # and each draw is plausible on its own
        assert np.all(np.abs(np.array(counts) - 1000.0) <= 5 * np.sqrt(1000.0))

    def test_bell_rate_matches_binned_counts(self):
        # oracle: chi-square of 2-hour bin counts against the exact rate integral
        grid = TimeGrid(0, 0.25, 401)
        times = grid.times()
        bell = 50.0 * np.clip(1.0 - np.abs(times - 50.0) / 30.0, 0.0, None)
        spec = ScenarioSpec(grid, ONE_REGION, bell[None, :], flat_model(100.0), seed=1234)
        arrivals = simulate_failures(spec)["A"]
        edges = np.arange(0.0, 100.1, 2.0)
        observed, _ = np.histogram(arrivals, bins=edges)
        expected = np.array([
            np.trapezoid(
                np.interp(np.linspace(a, b, 41), times, bell), np.linspace(a, b, 41)
            )
            for a, b in zip(edges[:-1], edges[1:])
        ])
        keep = expected >= 5.0
        stat = np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep])
        p = chi2.sf(stat, df=int(keep.sum()))
        assert p > 0.01

    def test_times_within_span(self):
        spec = constant_spec(8.0, 30.0, seed=7)
        t = simulate_failures(spec)["A"]
        assert np.all((t >= 0) & (t <= 30.0))

    def test_constant_rate_interarrivals_exponential(self):
        # thinning correctness: KS of inter-arrival times, many seeds
        passes = 0
        n_seeds = 100
        for seed in range(n_seeds):
            t = simulate_failures(constant_spec(10.0, 100.0, seed=seed))["A"]
            gaps = np.diff(t)
            p = kstest(gaps, "expon", args=(0, 1 / 10.0)).pvalue
            passes += p > 0.01
        assert passes >= 0.95 * n_seeds

    def test_seed_determinism(self):
        a = simulate_failures(constant_spec(10.0, 50.0, seed=99))["A"]
        b = simulate_failures(constant_spec(10.0, 50.0, seed=99))["A"]
        assert a.tobytes() == b.tobytes()
        c = simulate_failures(constant_spec(10.0, 50.0, seed=100))["A"]
        assert a.tobytes() != c.tobytes()


class TestSimulateDurations:
    def test_exponential_mean(self):
        # oracle: exponential mean 2, standard error 2/sqrt(n)
        spec = constant_spec(100.0, 100.0, seed=3)
        failures = {"A": np.sort(np.random.default_rng(0).uniform(0, 100, 10_000))}
        events = simulate_durations(spec, failures)
        durations = np.array([e.duration for e in events])
        assert durations.mean() == pytest.approx(2.0, abs=0.07)

    def test_narrow_component_quantiles(self):
        # oracle: Weibull(shape 50, scale 5) quantiles; nearly all mass in (4.3, 5.5)
        grid = TimeGrid(0, 0.25, 41)
        spec = ScenarioSpec(
            grid, ONE_REGION, np.full((1, 41), 1.0),
            flat_model(10.0, rows=((50.0, 5.0, 1.0),)), seed=5,
        )
        failures = {"A": np.linspace(0.0, 10.0, 200)}
        events = simulate_durations(spec, failures)
        durations = np.array([e.duration for e in events])
        assert np.all((durations > 4.3) & (durations < 5.5))

    def test_empty_failures(self):
        spec = constant_spec(1.0, 10.0, seed=1)
        assert simulate_durations(spec, {"A": np.array([])}) == []

    def test_interval_and_region_routing(self):
        # two intervals with wildly different scales: durations must follow the interval
        model = PiecewiseDurationModel(
            ((0.0, 10.0), (10.0, 20.0)),
            {
                (0, 0): WeibullMixture.from_params([(20.0, 0.1, 1.0)]),
                (1, 0): WeibullMixture.from_params([(20.0, 100.0, 1.0)]),
            },
        )
        grid = TimeGrid(0, 1.0, 21)
        spec = ScenarioSpec(grid, ONE_REGION, np.ones((1, 21)), model, seed=2)
        events = simulate_durations(spec, {"A": np.array([5.0, 15.0])})
        early = next(e for e in events if e.time == 5.0)
        late = next(e for e in events if e.time == 15.0)
        assert early.duration < 1.0 < late.duration

    def test_failure_outside_intervals_rejected(self):
        spec = constant_spec(1.0, 10.0, seed=1)
        with pytest.raises(ModelError):
            simulate_durations(spec, {"A": np.array([11.0])})

    def test_event_list_deterministic(self):
        spec = constant_spec(5.0, 40.0, seed=21)
        assert simulate_events(spec) == simulate_events(spec)


class TestCountingPaths:
    def test_single_event_steps(self):
        grid = TimeGrid(0, 1.0, 6)
        paths = build_counting_paths([Event("A", 1.0, 2.0)], grid, ONE_REGION)
        assert paths.failures.counts[0].tolist() == [0, 1, 1, 1, 1, 1]
        assert paths.recoveries.counts[0].tolist() == [0, 0, 0, 1, 1, 1]
        assert paths.active.counts[0].tolist() == [0, 1, 1, 0, 0, 0]

    def test_identity_and_monotonicity(self):
        rng = np.random.default_rng(8)
        grid = TimeGrid(0, 0.5, 101)
        part = RegionPartition(("A", "B"))
        events = [
            Event(rng.choice(["A", "B"]), float(rng.uniform(0, 50)), float(rng.exponential(5)))
            for _ in range(300)
        ]
        paths = build_counting_paths(events, grid, part)
        assert np.array_equal(
            paths.active.counts, paths.failures.counts - paths.recoveries.counts
        )
        assert np.all(np.diff(paths.failures.counts, axis=1) >= 0)
        assert np.all(np.diff(paths.recoveries.counts, axis=1) >= 0)
        assert np.all(paths.active.counts >= 0)

    def test_active_count_matches_interval_stabbing(self):
        # oracle: brute-force O(n^2) interval stabbing on the demo scenario
        spec, _ = load_scenario(bundled_config_path())
        events0 = simulate_events(spec)
        events, _ = preprocess_events(
            events_to_raw(events0, spec.grid.origin_minutes),
            origin_minutes=spec.grid.origin_minutes,
        )
        paths = build_counting_paths(events, spec.grid, spec.partition)
        total = paths.active.total()
        grid_times = spec.grid.times()
        brute = np.array([
            sum(1 for e in events if e.time <= t < e.time + e.duration)
            for t in grid_times
        ])
        assert np.array_equal(total, brute)
        assert total.max() == brute.max()

    def test_zero_at_end_when_recoveries_inside(self):
        grid = TimeGrid(0, 1.0, 11)
        events = [Event("A", 1.0, 2.0), Event("A", 3.0, 1.5)]
        paths = build_counting_paths(events, grid, ONE_REGION)
        assert paths.active.counts[0, -1] == 0

    def test_failure_outside_span_rejected(self):
        grid = TimeGrid(0, 1.0, 5)
        with pytest.raises(ModelError):
            build_counting_paths([Event("A", 9.0, 1.0)], grid, ONE_REGION)


class TestScenarioSpecValidation:
    def test_rejects_negative_rates(self):
        grid = TimeGrid(0, 1.0, 3)
        with pytest.raises(ModelError):
            ScenarioSpec(grid, ONE_REGION, np.array([[1.0, -0.5, 0.0]]), flat_model(2.0), 0)

    def test_rejects_model_not_covering_grid(self):
        grid = TimeGrid(0, 1.0, 11)
        with pytest.raises(ModelError):
            ScenarioSpec(grid, ONE_REGION, np.ones((1, 11)), flat_model(5.0), 0)
