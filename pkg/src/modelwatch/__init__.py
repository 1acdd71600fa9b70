"""modelwatch: validation and monitoring toolkit for tabular predictive models.

Data-quality profiling, distribution-shift detection, concept-drift
diagnosis, conformal uncertainty, and segment-level weakness analysis over
immutable columnar datasets, with a CLI that assembles thresholded
machine-readable monitoring reports.
"""

from .conformal import (
    ConformalCalibration,
    ReliabilityTable,
    brier_score,
    conformal_fit,
    conformal_interval,
    cqr_fit,
    cqr_interval,
    empirical_coverage,
    reliability_table,
)
from .concept import (
    DriftDiagnosis,
    MatchResult,
    classify_drift,
    nn_match,
    paired_model_comparison,
    residual_two_sample_test,
    segment_error_tracking,
    sliding_window_eval,
)
from .config import MonitorConfig, build_config, parse_config
from .data import (
    CategoricalColumn,
    ColumnSpec,
    FeatureFrame,
    NumericColumn,
    Residuals,
    Schema,
    ScoredDataset,
    load_csv,
    residuals,
    split_dataset,
    write_csv,
)
from .external import ExternalModel, score_external
from .outcome import (
    SegmentAssignment,
    SegmentMetricsTable,
    SensitivityReport,
    fit_gap,
    invariance_test,
    kmeans,
    perturbation_test,
    segment_by_bins,
    segment_metrics,
    weak_region_scan,
)
from .quality import (
    MissingnessProfile,
    OutlierScoreSet,
    RuleViolation,
    impute,
    outliers_iqr,
    outliers_lof,
    outliers_pca_mahalanobis,
    outliers_zscore,
    profile_missingness,
    validate_rules,
)
from .report import MonitoringReport, render_report, run_monitor
from .shift import (
    DriftResult,
    DriftScanConfig,
    EmpiricalDistribution,
    HistogramPair,
    drift_scan,
    energy_distance,
    jsd,
    kl_divergence,
    ks_two_sample,
    mahalanobis,
    make_frequency_pair,
    make_histogram_pair,
    mmd2,
    pca_reconstruction_errors,
    pca_reconstruction_fit,
    permutation_pvalue,
    psi,
    tvd,
    wasserstein1,
)

__version__ = "0.1.0"
