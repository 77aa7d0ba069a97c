"""Density-based split conformal prediction.

Conformal methods whose conformity scores come from a conditional density
estimate. They produce prediction regions that follow the shape of the
predictive density (unions of intervals for multimodal targets, label sets
for classification) while keeping finite-sample marginal coverage, and they
approach the smallest valid region (the highest-density set) as the density
estimate improves.
"""

from .cde import (
    DensityGrid,
    FittedCDE,
    KnnKernelCDE,
    KnnLabelCDE,
    LabelPMF,
    LevelCdf,
    OracleCDE,
    estimate_cde_loss,
    evaluate,
    fit_knn_kernel,
    level_cdf,
    level_quantile,
)
from .conformal import (
    CalibrationTable,
    PredictionRegion,
    calibrate,
    predict_label_set,
    predict_region_baseline,
    predict_region_cd,
    predict_region_hpd,
    threshold_region,
)
from .datasets import (
    Dataset,
    LabeledSample,
    Scenario,
    SCENARIOS,
    generate,
    load_csv,
    oracle_density,
    split_data,
)
from .errors import ConfigurationError, DegeneracyWarning, GridCoverageWarning, IngestionError
from .metrics import (
    conditional_coverage_deviation,
    hpd_symmetric_difference,
    marginal_coverage,
    oracle_hpd_region,
    region_size,
    sscv,
)
from .partition import (
    PartitionModel,
    assign,
    build_euclidean_partition,
    build_profile_partition,
    build_threshold_partition,
    profile_distance,
    unitary_partition,
)
from .scores import (
    BaselineAux,
    baseline_score,
    cd_score,
    hpd_score,
    probability_score,
)

__version__ = "0.1.0"
