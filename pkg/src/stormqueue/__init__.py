"""Nonstationary failure-recovery analytics for power-distribution outages.

Models storm-driven outage histories as multivariate infinite-server
queues with time-varying failure rates and piecewise Weibull-mixture
duration distributions: simulate them, estimate rates by moving average,
fit mixtures by EM, rebuild the active-failure path by convolution, and
bound rates from aggregated counts.
"""
from .aggregated import (
    StationaryWeibullFit,
    aggregate_regions,
    cumulative_bounds,
    fit_stationary_weibull_ls,
    lower_bound_rates,
    stationary_recovery_forward,
)
from .core import (
    CountSeries,
    Event,
    ModelError,
    PiecewiseDurationModel,
    RateSeries,
    RegionPartition,
    TimeGrid,
    WeibullComponent,
    WeibullMixture,
    aging_recovery_prob,
    infant_recovery_prob,
    mixture_cdf,
    weibull_cdf,
    weibull_pdf,
)
from .fitting import (
    FitConfig,
    FitError,
    GeoFitResult,
    MixtureFit,
    PiecewiseFitResult,
    fit_geo_piecewise,
    fit_piecewise,
    fit_weibull_mixture,
    load_model,
    model_from_dict,
    model_to_dict,
    sample_floor,
    save_model,
)
from .io import (
    EventData,
    FormatError,
    PreprocessReport,
    RawEvent,
    preprocess_events,
    read_counts_csv,
    read_event_csv,
    read_rate_csv,
    write_counts_csv,
    write_event_csv,
    write_rate_csv,
)
from .rates import (
    cumulative_from_rate,
    extend_grid,
    extend_rate_series,
    failure_rate_from_events,
    moving_average_rate,
    recovery_rate_from_events,
)
from .reconstruct import (
    ReconstructionResult,
    path_distance,
    reconstruct_active_failures,
    recovery_rate_from_model,
)
from .scenarios import (
    ScenarioConfigError,
    build_scenario,
    bundled_config_path,
    load_scenario,
    load_scenario_config,
)
from .simulate import (
    CountingPaths,
    ScenarioSpec,
    build_counting_paths,
    simulate_durations,
    simulate_events,
    simulate_failures,
)

__version__ = "0.1.0"
