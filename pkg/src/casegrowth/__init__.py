"""County-level case growth rate estimation with adaptive fitting windows.

Subpackages and modules:

* ``panel``     -- case/feature ingestion and the modeling table
* ``baseline``  -- two-point and fixed-window least-squares rate estimators
* ``windows``   -- cross-validated and clustered dynamic window selection
* ``forest``    -- honest regression forest over two-day data blocks and the
                   transfer-learning rate estimators built on it
* ``forecast``  -- seven-day-ahead forecasting, error metrics, benchmark harness
* ``synthetic`` -- seeded piecewise-exponential panel generator
* ``detect``    -- outbreak thresholding, investigation allocation and scoring
* ``cli``       -- command line entry points

Hot numeric kernels live in ``casegrowth._kernels`` and are compiled with
numba when available; set ``CASEGROWTH_DISABLE_NUMBA=1`` to force the pure
numpy fallback.
"""

from casegrowth.baseline import RateEstimate, ols_fixed_rate, ols_weights, two_point_rate
from casegrowth.forecast import forecast, metric_table, run_benchmark
from casegrowth.forest import (
    ForestParams,
    estimate_tlgrf,
    estimate_tlgrf_delta,
    estimate_time_only,
    feature_importance,
    forest_diagnostics,
    make_blocks,
    parity_pool,
    similarity_weights,
    train_forest,
)
from casegrowth.panel import (
    CountyPanel,
    FeatureFrame,
    ModelingTable,
    apply_min_count_filter,
    build_modeling_table,
    incident_series,
    load_cumulative_cases,
    load_features,
    smooth_moving_average,
)
from casegrowth.windows import (
    fold_schedule,
    kmeans_clusters,
    select_cluster_window,
    select_ctcv,
    select_tcv,
)

__version__ = "0.1.0"

__all__ = [
    "CountyPanel",
    "FeatureFrame",
    "ForestParams",
    "ModelingTable",
    "RateEstimate",
    "apply_min_count_filter",
    "build_modeling_table",
    "estimate_tlgrf",
    "estimate_tlgrf_delta",
    "estimate_time_only",
    "feature_importance",
    "fold_schedule",
    "forecast",
    "forest_diagnostics",
    "incident_series",
    "kmeans_clusters",
    "load_cumulative_cases",
    "load_features",
    "make_blocks",
    "metric_table",
    "ols_fixed_rate",
    "ols_weights",
    "parity_pool",
    "run_benchmark",
    "select_cluster_window",
    "select_ctcv",
    "select_tcv",
    "similarity_weights",
    "smooth_moving_average",
    "train_forest",
    "two_point_rate",
]
