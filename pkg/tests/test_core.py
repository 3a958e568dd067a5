import math

import numpy as np
import pytest
from scipy.integrate import quad

from stormqueue import (
    ModelError,
    PiecewiseDurationModel,
    RegionPartition,
    TimeGrid,
    WeibullComponent,
    WeibullMixture,
    aging_recovery_prob,
    infant_recovery_prob,
    mixture_cdf,
    weibull_pdf,
)
from stormqueue.core import ZERO_DURATION_CLAMP

# Published three-component duration mixtures for two cities, as
# (shape, scale, weight) rows; reference P{d < 24h} values 66.63% / 45.37%.
CITY_1_ROWS = [(0.2490, 0.0045, 0.3478), (2.7891, 12.1893, 0.3188), (3.7629, 197.0316, 0.3333)]
CITY_3_ROWS = [(0.2897, 0.0650, 0.3000), (3.9992, 12.2138, 0.1500), (2.8037, 129.7408, 0.5500)]

# Fitted mixtures for the pre-storm and post-landfall failure windows.
PRE_STORM_ROWS = [(1.0, 0.71, 0.486), (10.5, 14.4, 0.257), (10.7, 211.8, 0.257)]
LANDFALL_ROWS = [(5.3, 11.0, 0.323), (12.4, 112.2, 0.677)]


def random_mixture(rng: np.random.Generator) -> WeibullMixture:
    l = rng.integers(1, 4)
    weights = rng.dirichlet(np.ones(l))
    rows = [
        (float(rng.uniform(0.3, 8.0)), float(10 ** rng.uniform(-1, 2.3)), float(w))
        for w in weights
    ]
    return WeibullMixture.from_params(rows, renormalize=True)


class TestWeibullPdf:
    def test_exponential_special_case(self):
        gamma = 3.7
        assert weibull_pdf(gamma, 1.0, gamma) == pytest.approx(math.exp(-1.0) / gamma)

    def test_vanishes_at_zero_for_shape_above_one(self):
        assert weibull_pdf(0.0, 2.0, 5.0) == 0.0

    def test_normalizes_to_one_by_quadrature(self):
        # independent oracle: adaptive quadrature of the density
        k, g = 2.7891, 12.1893
        total, err = quad(lambda d: weibull_pdf(d, k, g), 0.0, np.inf)
        assert abs(total - 1.0) < 1e-6

    def test_zero_duration_clamped_for_shape_below_one(self):
        assert weibull_pdf(0.0, 0.5, 2.0) == weibull_pdf(ZERO_DURATION_CLAMP, 0.5, 2.0)
        assert math.isfinite(weibull_pdf(0.0, 0.5, 2.0))

    @pytest.mark.parametrize("shape,scale", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0)])
    def test_rejects_nonpositive_parameters(self, shape, scale):
        with pytest.raises(ModelError):
            weibull_pdf(1.0, shape, scale)

    def test_rejects_negative_duration(self):
        with pytest.raises(ModelError):
            weibull_pdf(-0.1, 2.0, 1.0)

    def test_no_overflow_for_extreme_arguments(self):
        assert weibull_pdf(1e4, 60.0, 1e-3) == 0.0


class TestMixtureCdf:
    def test_city_1_infant_fraction(self):
        mix = WeibullMixture.from_params(CITY_1_ROWS, renormalize=True)
        assert mixture_cdf(mix, 24.0) == pytest.approx(0.6663, abs=5e-4)

    def test_city_3_infant_fraction(self):
        mix = WeibullMixture.from_params(CITY_3_ROWS, renormalize=True)
        assert mixture_cdf(mix, 24.0) == pytest.approx(0.4537, abs=5e-4)

    def test_zero_at_zero(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            assert mixture_cdf(random_mixture(rng), 0.0) == 0.0

    def test_monotone_and_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            mix = random_mixture(rng)
            d = np.sort(rng.uniform(0, 400, size=60))
            values = mix.cdf(d)
            assert np.all(np.diff(values) >= -1e-12)
            assert np.all((values >= 0) & (values <= 1))

    def test_pdf_integrates_to_cdf(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            mix = random_mixture(rng)
            upper = rng.uniform(0.5, 10.0) * max(c.scale for c in mix.components)
            total, err = quad(lambda d: mix.pdf(d), 0.0, upper, limit=200)
            assert abs(total - mix.cdf(upper)) < 1e-6


class TestMixtureConstruction:
    def test_components_sorted_by_scale(self):
        rows = [(2.0, 100.0, 0.5), (1.0, 1.0, 0.5)]
        mix = WeibullMixture.from_params(rows)
        scales = [c.scale for c in mix.components]
        assert scales == sorted(scales)

    def test_permuting_components_gives_identical_mixture(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            mix = random_mixture(rng)
            rows = [(c.shape, c.scale, c.weight) for c in mix.components]
            perm = [rows[i] for i in rng.permutation(len(rows))]
            assert WeibullMixture.from_params(perm) == mix

    def test_small_weight_error_renormalized(self):
        mix = WeibullMixture.from_params([(1.0, 1.0, 0.5 + 2e-7), (2.0, 2.0, 0.5)])
        assert math.fsum(c.weight for c in mix.components) == pytest.approx(1.0, abs=1e-9)

    def test_large_weight_error_rejected(self):
        with pytest.raises(ModelError):
            WeibullMixture.from_params([(1.0, 1.0, 0.6), (2.0, 2.0, 0.5)])

    def test_component_validation(self):
        with pytest.raises(ModelError):
            WeibullComponent(-1.0, 1.0, 1.0)
        with pytest.raises(ModelError):
            WeibullComponent(1.0, 1.0, 0.0)


def two_window_model() -> PiecewiseDurationModel:
    return PiecewiseDurationModel(
        intervals=((0.0, 12.0), (12.0, 32.0)),
        mixtures={
            (0, 0): WeibullMixture.from_params(PRE_STORM_ROWS),
            (1, 0): WeibullMixture.from_params(LANDFALL_ROWS),
        },
    )


class TestInfantRecovery:
    def test_pre_storm_window_mostly_infant(self):
        model = two_window_model()
        assert infant_recovery_prob(model, 0, None, 24.0) == pytest.approx(0.743, abs=2e-3)

    def test_landfall_window_mostly_aging(self):
        model = two_window_model()
        assert infant_recovery_prob(model, 1, None, 24.0) == pytest.approx(0.322, abs=2e-3)

    def test_limit_is_one(self):
        model = two_window_model()
        assert infant_recovery_prob(model, 0, None, 1e9) == pytest.approx(1.0)

    def test_aging_is_complement(self):
        model = two_window_model()
        total = infant_recovery_prob(model, 1, None, 24.0) + aging_recovery_prob(model, 1, None, 24.0)
        assert total == pytest.approx(1.0)

    def test_unknown_cell_rejected(self):
        model = two_window_model()
        with pytest.raises(ModelError):
            infant_recovery_prob(model, 5, None, 24.0)
        regional = PiecewiseDurationModel(
            ((0.0, 10.0),),
            {(0, 0): WeibullMixture.from_params(LANDFALL_ROWS)},
            regions=("east",),
        )
        with pytest.raises(ModelError):
            infant_recovery_prob(regional, 0, "nowhere", 24.0)


class TestPiecewiseModel:
    def test_interval_lookup_half_open(self):
        model = two_window_model()
        assert model.interval_index(0.0) == 0
        assert model.interval_index(11.999) == 0
        assert model.interval_index(12.0) == 1
        assert model.interval_index(32.0) == 1  # right edge belongs to the last interval
        with pytest.raises(ModelError):
            model.interval_index(33.0)

    def test_rejects_gapped_intervals(self):
        mix = WeibullMixture.from_params([(1.0, 1.0, 1.0)])
        with pytest.raises(ModelError):
            PiecewiseDurationModel(((0.0, 1.0), (2.0, 3.0)), {(0, 0): mix, (1, 0): mix})

    def test_rejects_missing_cell(self):
        mix = WeibullMixture.from_params([(1.0, 1.0, 1.0)])
        with pytest.raises(ModelError):
            PiecewiseDurationModel(((0.0, 1.0), (1.0, 3.0)), {(0, 0): mix})


class TestGridAndPartition:
    def test_grid_points(self):
        grid = TimeGrid(0, 0.25, 5)
        assert grid.span_hours == 1.0
        assert np.allclose(grid.times(), [0, 0.25, 0.5, 0.75, 1.0])

    def test_grid_validation(self):
        with pytest.raises(ModelError):
            TimeGrid(0, 0.0, 5)
        with pytest.raises(ModelError):
            TimeGrid(0, 1.0, 0)

    def test_partition_lookup(self):
        part = RegionPartition(("a", "b"), ("Town A", "Town B"))
        assert part.index("b") == 1
        assert part.name("a") == "Town A"
        with pytest.raises(ModelError):
            part.index("c")

    def test_partition_rejects_duplicates(self):
        with pytest.raises(ModelError):
            RegionPartition(("a", "a"))
