"""Data-quality checks: missingness, rule validation, imputation, outliers.

Quantile conventions used throughout: linear interpolation between order
statistics (numpy's default), so the median of an even-length sample is the
interpolated midpoint. Detectors flag rows, they never mutate data; what to
do with flagged rows (capping, exclusion, human review) is the caller's
decision.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import chi2

from ._pca import fit_pca
from .data import CategoricalColumn, FeatureFrame, NumericColumn, Schema
from .errors import (
    AllMissingColumn,
    SchemaError,
    StrategyKindMismatch,
    TooFewRows,
)

MISSING_CATEGORY = "__MISSING__"


@dataclass(frozen=True)
class ColumnMissingness:
    missing_count: int
    missing_fraction: float


@dataclass(frozen=True)
class MissingnessProfile:
    per_column: dict[str, ColumnMissingness]
    row_complete_fraction: float


@dataclass(frozen=True)
class RuleViolation:
    row: int
    column: str
    kind: str  # out_of_range | invalid_category | wrong_type
    observed: str


@dataclass(frozen=True)
class OutlierScoreSet:
    """Per-row outlier scores and flags for one detection method.

    ``flags[i]`` is True exactly when ``scores[i]`` exceeds the method's
    threshold rule; rows with missing inputs carry NaN scores and are never
    flagged.
    """

    method: str
    scores: np.ndarray
    flags: np.ndarray
    params: dict = field(default_factory=dict)


def profile_missingness(frame: FeatureFrame) -> MissingnessProfile:
    """Count missing cells per column and the fraction of fully-observed rows."""
    n = frame.n_rows
    per_column = {}
    complete = np.ones(n, dtype=bool)
    for col in frame.columns:
        count = int(col.missing_mask.sum())
        per_column[col.name] = ColumnMissingness(count, count / n if n else 0.0)
        complete &= ~col.missing_mask
    return MissingnessProfile(per_column, float(complete.mean()) if n else 1.0)


def impute(frame: FeatureFrame, strategies: Mapping[str, str]) -> FeatureFrame:
    """Fill missing cells per column.

    Strategies: ``mean``/``median`` (numeric, statistic over observed values),
    ``mode`` (categorical, most frequent label, first-appearance tie-break),
    ``missing_as_category`` (categorical, missing becomes its own label).
    Columns not named in ``strategies`` pass through unchanged.
    """
    out = frame
    for name, strategy in strategies.items():
        col = frame.column(name)
        if strategy in ("mean", "median"):
            if not isinstance(col, NumericColumn):
                raise StrategyKindMismatch(f"{strategy} imputation needs a numeric column: {name}")
            observed = col.observed()
            if observed.size == 0:
                raise AllMissingColumn(name)
            fill = float(np.mean(observed) if strategy == "mean" else np.median(observed))
            values = col.values.copy()
            values[col.missing_mask] = fill
            out = out.replace_column(NumericColumn(name, values, np.zeros(len(values), bool)))
        elif strategy == "mode":
            if not isinstance(col, CategoricalColumn):
                raise StrategyKindMismatch(f"mode imputation needs a categorical column: {name}")
            observed = col.codes[~col.missing_mask]
            if observed.size == 0:
                raise AllMissingColumn(name)
            counts = np.bincount(observed, minlength=len(col.labels))
            fill_code = int(np.argmax(counts))  # argmax takes the first (earliest label) on ties
            codes = col.codes.copy()
            codes[col.missing_mask] = fill_code
            out = out.replace_column(
                CategoricalColumn(name, codes, col.labels, np.zeros(len(codes), bool))
            )
        elif strategy == "missing_as_category":
            if not isinstance(col, CategoricalColumn):
                raise StrategyKindMismatch(f"missing_as_category needs a categorical column: {name}")
            if not col.missing_mask.any():
                continue
            labels = col.labels + (MISSING_CATEGORY,)
            codes = col.codes.copy()
            codes[col.missing_mask] = len(labels) - 1
            out = out.replace_column(
                CategoricalColumn(name, codes, labels, np.zeros(len(codes), bool))
            )
        else:
            raise ValueError(f"unknown imputation strategy {strategy!r}")
    return out


def validate_rules(frame: FeatureFrame, schema: Schema) -> list[RuleViolation]:
    """Check every cell against the schema's range and category rules.

    Missing cells never violate a rule. Non-finite numeric values that are
    not masked as missing are reported as ``wrong_type``.
    """
    violations: list[RuleViolation] = []
    for col in frame.columns:
        if col.name not in schema:
            continue
        spec = schema.column(col.name)
        if isinstance(col, NumericColumn):
            observed = ~col.missing_mask
            bad = observed & ~np.isfinite(col.values)
            for row in np.nonzero(bad)[0]:
                violations.append(RuleViolation(int(row), col.name, "wrong_type", repr(col.values[row])))
            if spec.valid_range is not None:
                lo, hi = spec.valid_range
                with np.errstate(invalid="ignore"):
                    out = observed & ~bad & ((col.values < lo) | (col.values > hi))
                for row in np.nonzero(out)[0]:
                    violations.append(
                        RuleViolation(int(row), col.name, "out_of_range", repr(float(col.values[row])))
                    )
        else:
            if spec.valid_categories is not None and col.labels:
                valid = np.array([lbl in spec.valid_categories for lbl in col.labels], dtype=bool)
                observed = ~col.missing_mask
                bad = observed & ~valid[np.clip(col.codes, 0, None)]
                for row in np.nonzero(bad)[0]:
                    violations.append(
                        RuleViolation(int(row), col.name, "invalid_category", col.labels[col.codes[row]])
                    )
    violations.sort(key=lambda v: (v.row, v.column))
    return violations


def _as_values(column) -> np.ndarray:
    if isinstance(column, NumericColumn):
        return column.values
    return np.asarray(column, dtype=np.float64)


def outliers_zscore(column, z_threshold: float = 3.0) -> OutlierScoreSet:
    """Z-score outliers: scores |x - mean| / std over observed values.

    A zero-variance column yields all-zero scores and no flags (with a
    warning) so batch profiling never aborts.
    """
    values = _as_values(column)
    mask = np.isnan(values)
    observed = values[~mask]
    if observed.size < 2:
        raise TooFewRows("z-score needs at least 2 observed values")
    mean = observed.mean()
    std = observed.std()
    scores = np.full(len(values), np.nan)
    if std == 0:
        warnings.warn("zero-variance column: all z-scores set to 0, no flags", stacklevel=2)
        scores[~mask] = 0.0
    else:
        scores[~mask] = np.abs(observed - mean) / std
    with np.errstate(invalid="ignore"):
        flags = scores > z_threshold
    flags[mask] = False
    return OutlierScoreSet("zscore", scores, flags, {"z_threshold": z_threshold})


def outliers_iqr(column, multiplier: float = 1.5) -> OutlierScoreSet:
    """IQR fence outliers: flag x below Q1 - m*IQR or above Q3 + m*IQR.

    Scores are the distance beyond the nearer quartile in IQR units, so
    ``flags == scores > multiplier``. A zero-IQR column scores values unequal
    to the quartiles as infinite, flagging exactly the values != Q1.
    """
    values = _as_values(column)
    mask = np.isnan(values)
    observed = values[~mask]
    if observed.size < 4:
        raise TooFewRows("IQR method needs at least 4 observed values")
    q1, q3 = np.quantile(observed, [0.25, 0.75])  # linear interpolation
    iqr = q3 - q1
    deviation = np.maximum(q1 - values, values - q3)
    scores = np.full(len(values), np.nan)
    if iqr > 0:
        scores[~mask] = deviation[~mask] / iqr
    else:
        dev = deviation[~mask]
        scores[~mask] = np.where(dev > 0, np.inf, 0.0)
    with np.errstate(invalid="ignore"):
        flags = scores > multiplier
    flags[mask] = False
    return OutlierScoreSet(
        "iqr", scores, flags, {"multiplier": multiplier, "q1": float(q1), "q3": float(q3)}
    )


_LOF_EPS = 1e-12


def outliers_lof(frame: FeatureFrame, k: int = 20, flag_threshold: float = 1.5) -> OutlierScoreSet:
    """Local Outlier Factor over the numeric columns of a complete frame.

    Features are z-standardized before distance computation (LOF is
    scale-dependent otherwise). Uses the usual construction: k-distance,
    reachability distance, local reachability density, and the mean density
    ratio against the k nearest neighbors. Distances are floored at a tiny
    epsilon so duplicate points get density ratio 1 instead of dividing by
    zero; a frame of identical points scores 1.0 everywhere.
    """
    X = frame.numeric_matrix()
    if np.isnan(X).any():
        raise SchemaError("LOF requires a frame with no missing values; impute first")
    n = X.shape[0]
    if not 1 <= k < n:
        raise TooFewRows(f"LOF needs 1 <= k < n_rows, got k={k}, n={n}")

    std = X.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    Z = (X - X.mean(axis=0)) / scale

    diff = Z[:, None, :] - Z[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    np.fill_diagonal(dist, np.inf)

    order = np.argsort(dist, axis=1, kind="stable")
    neighbors = order[:, :k]  # ties broken toward lower index
    kth = dist[np.arange(n), neighbors[:, -1]]  # k-distance of each point

    # reach_dist[i, j] = max(k-distance(o_j), d(i, o_j)) for i's j-th neighbor
    neighbor_dist = dist[np.arange(n)[:, None], neighbors]
    reach = np.maximum(kth[neighbors], neighbor_dist)
    lrd = 1.0 / np.maximum(reach.mean(axis=1), _LOF_EPS)

    scores = (lrd[neighbors].mean(axis=1)) / lrd
    flags = scores > flag_threshold
    return OutlierScoreSet("lof", scores, flags, {"k": k, "flag_threshold": flag_threshold})


def outliers_pca_mahalanobis(
    frame: FeatureFrame,
    variance_fraction: float = 0.95,
    alpha: float = 0.01,
) -> OutlierScoreSet:
    """PCA + Mahalanobis outliers on the numeric columns of a complete frame.

    Fits a PCA basis retaining the smallest component count reaching
    ``variance_fraction``, computes the squared Mahalanobis distance in
    component space (diagonal covariance given by the component variances),
    and flags rows whose squared distance exceeds the chi-squared
    ``1 - alpha`` quantile at ``dof = retained components``.
    """
    X = frame.numeric_matrix()
    if np.isnan(X).any():
        raise SchemaError("PCA-Mahalanobis requires a frame with no missing values; impute first")
    basis = fit_pca(X, variance_fraction)
    n = X.shape[0]
    if basis.n_components == 0:
        warnings.warn("constant data: Mahalanobis distances set to 0, no flags", stacklevel=2)
        return OutlierScoreSet(
            "pca_mahalanobis",
            np.zeros(n),
            np.zeros(n, dtype=bool),
            {"variance_fraction": variance_fraction, "alpha": alpha, "n_components": 0},
        )
    scores = np.sum(basis.transform(X) ** 2 / basis.variances, axis=1)
    threshold = float(chi2.ppf(1 - alpha, df=basis.n_components))
    flags = scores > threshold
    return OutlierScoreSet(
        "pca_mahalanobis",
        scores,
        flags,
        {
            "variance_fraction": variance_fraction,
            "alpha": alpha,
            "n_components": basis.n_components,
            "threshold": threshold,
        },
    )
