import numpy as np
import pytest

from stormqueue import (
    Event,
    ModelError,
    RegionPartition,
    ScenarioSpec,
    TimeGrid,
    WeibullMixture,
    cumulative_from_rate,
    extend_rate_series,
    failure_rate_from_events,
    moving_average_rate,
    recovery_rate_from_events,
    simulate_events,
    simulate_failures,
)
from stormqueue.core import PiecewiseDurationModel, RateSeries
from stormqueue.rates import extend_grid

ONE = RegionPartition(("A",))


def grid_over(span: float, step: float = 0.25) -> TimeGrid:
    return TimeGrid(0, step, int(round(span / step)) + 1)


class TestMovingAverageRate:
    def test_no_events_zero_everywhere(self):
        series = moving_average_rate({"A": []}, 5.0, grid_over(50.0), ONE)
        assert np.all(series.values == 0.0)

    def test_uniform_spacing_gives_flat_rate(self):
        epochs = np.arange(0.0, 100.0 + 1e-9, 0.1)
        series = moving_average_rate({"A": epochs}, 5.0, grid_over(100.0), ONE)
        times = series.grid.times()
        interior = (times >= 10.0) & (times <= 90.0)
        assert np.allclose(series.values[0][interior], 10.0, atol=1e-9)

    def test_bell_rate_peak_recovered(self):
        grid = grid_over(100.0)
        times = grid.times()
        bell = 50.0 * np.clip(1.0 - np.abs(times - 50.0) / 25.0, 0.0, None)
        model = PiecewiseDurationModel(
            ((0.0, 100.0),), {(0, 0): WeibullMixture.from_params([(1.0, 2.0, 1.0)])}
        )
        spec = ScenarioSpec(grid, ONE, bell[None, :], model, seed=42)
        arrivals = simulate_failures(spec)
        series = moving_average_rate(arrivals, 5.0, grid, ONE)
        peak_value = series.values[0].max()
        peak_time = times[series.values[0].argmax()]
        assert abs(peak_value - 50.0) / 50.0 < 0.15
        assert abs(peak_time - 50.0) <= 5.0

    def test_mass_conserved_exactly_for_any_event_set(self):
        rng = np.random.default_rng(0)
        grid = grid_over(60.0)
        for trial in range(25):
            n = int(rng.integers(1, 400))
            epochs = rng.uniform(0.0, 60.0, size=n)
            tau = float(rng.uniform(0.3, 12.0))
            series = moving_average_rate({"A": epochs}, tau, grid, ONE)
            widths = np.full(grid.count, grid.step_hours)
            widths[0] = widths[-1] = grid.step_hours / 2.0
            assert series.values[0] @ widths == pytest.approx(n, rel=1e-9)

    def test_trapezoid_integral_matches_event_count(self):
        rng = np.random.default_rng(1)
        grid = grid_over(60.0)
        epochs = rng.uniform(0.0, 60.0, size=250)
        series = moving_average_rate({"A": epochs}, 5.0, grid, ONE)
        assert cumulative_from_rate(series)[0, -1] == pytest.approx(250.0, rel=1e-9)

    def test_rates_nonnegative_and_finite(self):
        rng = np.random.default_rng(2)
        grid = grid_over(30.0)
        epochs = np.concatenate([[0.0, 30.0], rng.uniform(0, 30, 100)])
        series = moving_average_rate({"A": epochs}, 2.0, grid, ONE)
        assert np.all(series.values >= 0)
        assert np.all(np.isfinite(series.values))

    def test_tau_below_step_rejected(self):
        with pytest.raises(ModelError):
            moving_average_rate({"A": [1.0]}, 0.1, grid_over(10.0), ONE)

    def test_epochs_outside_span_rejected(self):
        with pytest.raises(ModelError):
            moving_average_rate({"A": [99.0]}, 5.0, grid_over(50.0), ONE)

    def test_estimator_consistency_with_sample_size(self):
        # mean squared error against the true bell rate shrinks as n grows
        grid = grid_over(100.0)
        times = grid.times()
        interior = (times >= 20.0) & (times <= 80.0)
        bell_peak = {100: 2.0, 1000: 20.0, 10000: 200.0}
        model = PiecewiseDurationModel(
            ((0.0, 100.0),), {(0, 0): WeibullMixture.from_params([(1.0, 2.0, 1.0)])}
        )
        mse = {}
        for n, peak in bell_peak.items():
            bell = peak * np.clip(1.0 - np.abs(times - 50.0) / 40.0, 0.0, None)
            errs = []
            for seed in range(50):
                spec = ScenarioSpec(grid, ONE, bell[None, :], model, seed=seed)
                series = moving_average_rate(simulate_failures(spec), 5.0, grid, ONE)
                rel = (series.values[0][interior] - bell[interior]) / peak
                errs.append(np.mean(rel**2))
            mse[n] = np.mean(errs)
        assert mse[1000] < mse[100]
        assert mse[10000] < mse[1000]


class TestRecoveryRate:
    def test_single_event_mass_centered_on_recovery(self):
        grid = grid_over(30.0)
        series = recovery_rate_from_events([Event("A", 0.0, 10.0)], 5.0, grid, ONE)
        times = grid.times()
        values = series.values[0]
        assert times[values.argmax()] == pytest.approx(10.0, abs=0.25)
        assert np.all(values[(times < 4.9) | (times > 15.1)] == 0.0)
        widths = np.full(grid.count, 0.25)
        widths[0] = widths[-1] = 0.125
        assert values @ widths == pytest.approx(1.0, rel=1e-9)

    def test_zero_durations_match_failure_rate(self):
        rng = np.random.default_rng(3)
        grid = grid_over(40.0)
        events = [Event("A", float(t), 0.0) for t in rng.uniform(0, 40, 200)]
        recovery = recovery_rate_from_events(events, 5.0, grid, ONE)
        failure = failure_rate_from_events(events, 5.0, grid, ONE)
        assert np.array_equal(recovery.values, failure.values)

    def test_integral_counts_recoveries_within_span(self):
        grid = grid_over(80.0)
        model = PiecewiseDurationModel(
            ((0.0, 80.0),), {(0, 0): WeibullMixture.from_params([(1.5, 8.0, 1.0)])}
        )
        spec = ScenarioSpec(grid, ONE, np.full((1, grid.count), 6.0), model, seed=11)
        events = simulate_events(spec)
        n_recovered = sum(1 for e in events if e.recovery_time <= 80.0)
        series = recovery_rate_from_events(events, 5.0, grid, ONE)
        assert cumulative_from_rate(series)[0, -1] == pytest.approx(n_recovered, abs=0.5)


class TestCumulative:
    def test_constant_rate(self):
        grid = grid_over(20.0)
        series = RateSeries(grid, ONE, np.full((1, grid.count), 3.0))
        cum = cumulative_from_rate(series)
        assert cum[0, -1] == pytest.approx(60.0)
        assert np.all(np.diff(cum[0]) >= 0)

    def test_zero_rate(self):
        grid = grid_over(20.0)
        series = RateSeries(grid, ONE, np.zeros((1, grid.count)))
        assert np.all(cumulative_from_rate(series) == 0.0)

    def test_simulated_final_count_within_one_event(self):
        grid = grid_over(100.0)
        times = grid.times()
        bell = 30.0 * np.clip(1.0 - np.abs(times - 50.0) / 30.0, 0.0, None)
        model = PiecewiseDurationModel(
            ((0.0, 100.0),), {(0, 0): WeibullMixture.from_params([(1.0, 2.0, 1.0)])}
        )
        spec = ScenarioSpec(grid, ONE, bell[None, :], model, seed=17)
        arrivals = simulate_failures(spec)
        series = moving_average_rate(arrivals, 5.0, grid, ONE)
        assert cumulative_from_rate(series)[0, -1] == pytest.approx(len(arrivals["A"]), abs=1.0)


class TestExtension:
    def test_extend_grid_and_series(self):
        grid = grid_over(10.0)
        series = RateSeries(grid, ONE, np.ones((1, grid.count)))
        longer = extend_rate_series(series, 5.0)
        assert longer.grid.count == grid.count + 20
        assert np.all(longer.values[0, : grid.count] == 1.0)
        assert np.all(longer.values[0, grid.count:] == 0.0)
        assert extend_grid(grid, 0.0).count == grid.count
