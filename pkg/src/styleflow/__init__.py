"""styleflow: directed influence discovery between city-level style-popularity
trajectories, and influence-conditioned coherent forecasting."""

from .datamodel import (
    AttributeRecord,
    CityMetadata,
    Corpus,
    DataError,
    load_city_metadata,
    load_records,
)
from .styles import StyleModel, assign_style_posteriors, fit_gmm, gmm_log_likelihood
from .trajectories import (
    SplitSpec,
    TrajectoryPanel,
    build_panel,
    deseasonalize,
    global_trajectory,
    interpolate_missing,
    smooth_panel,
    split,
)
from .numstats import ARFit, f_test, fit_ar, haversine, paired_ttest, spearman
from .influence import (
    InfluenceScores,
    InfluenceTensor,
    city_to_world,
    correlate_metadata,
    discover_tensor,
    granger_test,
    influence_dynamics,
    influence_scores,
    rank_cities,
)
from .forecast import (
    ForecastModel,
    ForecastPanel,
    MetricsReport,
    baseline_forecast,
    compare_models,
    compute_metrics,
    forecast_horizon,
    train_coherent,
)
from .synth import PlantedEdge, SyntheticSpec, generate_synthetic, synthesize_panel

__version__ = "0.1.0"

__all__ = [
    "AttributeRecord", "CityMetadata", "Corpus", "DataError",
    "load_city_metadata", "load_records",
    "StyleModel", "fit_gmm", "assign_style_posteriors", "gmm_log_likelihood",
    "TrajectoryPanel", "SplitSpec", "build_panel", "interpolate_missing",
    "smooth_panel", "deseasonalize", "split", "global_trajectory",
    "ARFit", "fit_ar", "f_test", "spearman", "paired_ttest", "haversine",
    "InfluenceTensor", "InfluenceScores", "granger_test", "discover_tensor",
    "influence_scores", "rank_cities", "city_to_world", "correlate_metadata",
    "influence_dynamics",
    "ForecastModel", "ForecastPanel", "MetricsReport", "train_coherent",
    "forecast_horizon", "baseline_forecast", "compute_metrics", "compare_models",
    "SyntheticSpec", "PlantedEdge", "synthesize_panel", "generate_synthetic",
    "__version__",
]
