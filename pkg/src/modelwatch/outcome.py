"""Model weakness identification and robustness testing.

Segments come from explicit/quantile binning of a feature or from k-means
clusters; per-segment error metrics and their lift over the overall metric
locate weak regions. Robustness tests rescore perturbed inputs through any
object with a ``predict(frame) -> array`` method, such as the external
model adapter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy.stats import rankdata

from .data import CategoricalColumn, FeatureFrame, NumericColumn, ScoredDataset
from .errors import (
    KExceedsRows,
    MetricIncompatible,
    SchemaError,
    SchemaMismatch,
    UnknownFeature,
)

DEFAULT_MIN_ROWS = 30


class Scorer(Protocol):
    def predict(self, frame: FeatureFrame) -> np.ndarray: ...


@dataclass(frozen=True)
class SegmentAssignment:
    """Per-row segment ids with human-readable labels."""

    segment_ids: np.ndarray
    labels: tuple[str, ...]
    source: str  # binned | kmeans


@dataclass(frozen=True)
class KMeansAssignment(SegmentAssignment):
    centroids: np.ndarray = field(default=None)  # original feature units
    inertia: float = 0.0
    n_iter: int = 0


@dataclass(frozen=True)
class SegmentMetricRow:
    label: str
    rows: int
    value: float | None
    lift: float | None
    degenerate: bool = False


@dataclass(frozen=True)
class SegmentMetricsTable:
    metric: str
    overall_value: float | None
    overall_rows: int
    segments: list[SegmentMetricRow]


@dataclass(frozen=True)
class WeakRegion:
    feature: str
    range_label: str
    rows: int
    metric: str
    value: float
    lift: float


@dataclass(frozen=True)
class FitGapRow:
    label: str
    train_rows: int
    test_rows: int
    train_value: float | None
    test_value: float | None
    gap: float | None
    flag: str  # overfit | underfit | ok


@dataclass(frozen=True)
class FitGapTable:
    metric: str
    overall_train: float
    overall_test: float
    rows: list[FitGapRow]


@dataclass(frozen=True)
class FeatureSensitivity:
    feature: str
    noise_scale: float
    mean_abs_delta: float
    p95_abs_delta: float


@dataclass(frozen=True)
class SensitivityReport:
    rows: list[FeatureSensitivity]
    n_repeats: int
    seed: int


@dataclass(frozen=True)
class InvarianceReport:
    max_abs_delta: float
    mean_abs_delta: float
    violating_rows: list[int]
    tolerance: float
    mode: str


# ---------------------------------------------------------------------------
# Error metrics
# ---------------------------------------------------------------------------

METRIC_NAMES = ("mae", "rmse", "error_rate", "auc")


def _is_binary(y: np.ndarray) -> bool:
    return bool(np.all(np.isin(y, (0.0, 1.0))))


def metric_value(metric: str, y: np.ndarray, pred: np.ndarray, threshold: float) -> float | None:
    if metric == "mae":
        return float(np.mean(np.abs(y - pred)))
    if metric == "rmse":
        return float(np.sqrt(np.mean((y - pred) ** 2)))
    if metric == "error_rate":
        return float(np.mean((pred >= threshold) != (y == 1.0)))
    if metric == "auc":
        pos = y == 1.0
        n_pos = int(pos.sum())
        n_neg = y.size - n_pos
        if n_pos == 0 or n_neg == 0:
            return None  # single-class sample: AUC undefined
        ranks = rankdata(pred)
        return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
    raise ValueError(f"unknown metric {metric!r}")


def check_metric(metric: str, y: np.ndarray) -> None:
    if metric not in METRIC_NAMES:
        raise ValueError(f"unknown metric {metric!r}; valid: {METRIC_NAMES}")
    if metric in ("error_rate", "auc") and not _is_binary(y):
        raise MetricIncompatible(f"{metric} needs binary 0/1 targets")


def default_error_metric(y: np.ndarray) -> str:
    """MAE for continuous targets, error rate at 0.5 for binary ones."""
    return "error_rate" if _is_binary(y) else "mae"


def _lift(value: float | None, overall: float | None) -> tuple[float | None, bool]:
    if value is None or overall is None:
        return None, False
    if overall == 0:
        if value == 0:
            return 1.0, True  # degenerate by convention: nothing to compare
        return float("inf"), True
    return value / overall, False


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------


def _format_edge(v: float) -> str:
    return f"{v:g}"


def _bin_labels(feature: str, edges: np.ndarray) -> list[str]:
    labels = []
    for i in range(len(edges) - 1):
        close = "]" if i == len(edges) - 2 else ")"
        labels.append(
            f"{feature} in [{_format_edge(edges[i])}, {_format_edge(edges[i + 1])}{close}"
        )
    return labels


def segment_by_bins(
    frame: FeatureFrame,
    feature: str,
    edges: Sequence[float] | int,
) -> SegmentAssignment:
    """Segment rows by value ranges of a numeric feature.

    ``edges`` is either explicit ascending bin edges or a quantile count.
    Bins are right-open except the last; quantile edges are deduplicated
    when the feature has ties. Missing values form their own "missing"
    segment, and values outside explicit edges an "out_of_range" segment,
    each only when present.
    """
    if feature not in frame:
        raise UnknownFeature(feature)
    col = frame.column(feature)
    if not isinstance(col, NumericColumn):
        raise SchemaError(f"segment_by_bins needs a numeric feature, got {feature!r}")
    observed = col.observed()
    if isinstance(edges, (int, np.integer)):
        if edges < 2:
            raise ValueError("quantile count must be >= 2")
        if observed.size == 0:
            raise SchemaError(f"feature {feature!r} has no observed values")
        qs = np.quantile(observed, np.linspace(0, 1, int(edges) + 1))
        edge_arr = np.unique(qs)
        if edge_arr.size == 1:  # constant feature collapses to a single segment
            edge_arr = np.array([edge_arr[0], edge_arr[0]])
    else:
        edge_arr = np.asarray(edges, dtype=np.float64)
        if edge_arr.ndim != 1 or edge_arr.size < 2 or np.any(np.diff(edge_arr) < 0):
            raise ValueError("explicit edges must be ascending with >= 2 entries")

    n_bins = max(len(edge_arr) - 1, 1)
    if edge_arr[0] == edge_arr[-1]:
        labels = [f"{feature} in [{_format_edge(edge_arr[0])}, {_format_edge(edge_arr[-1])}]"]
        ids = np.zeros(frame.n_rows, dtype=np.int64)
        in_range = col.values == edge_arr[0]
    else:
        labels = _bin_labels(feature, edge_arr)
        with np.errstate(invalid="ignore"):
            ids = np.searchsorted(edge_arr, col.values, side="right") - 1
            ids = np.where(col.values == edge_arr[-1], n_bins - 1, ids)  # close the last bin
            in_range = (col.values >= edge_arr[0]) & (col.values <= edge_arr[-1])
        ids = np.clip(ids, 0, n_bins - 1)

    out_of_range = ~col.missing_mask & ~in_range
    if col.missing_mask.any():
        ids = np.where(col.missing_mask, len(labels), ids)
        labels.append(f"{feature} missing")
    if out_of_range.any():
        ids = np.where(out_of_range, len(labels), ids)
        labels.append(f"{feature} out_of_range")
    return SegmentAssignment(np.asarray(ids, dtype=np.int64), tuple(labels), "binned")


def kmeans(
    frame: FeatureFrame,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> KMeansAssignment:
    """Lloyd's k-means with k-means++ seeding on z-standardized features.

    Deterministic for fixed inputs and seed. Empty clusters are re-seeded
    from the point farthest from its assigned centroid. Iterates until the
    largest centroid movement falls below ``tol`` or ``max_iter`` is hit.
    """
    X = frame.numeric_matrix()
    if np.isnan(X).any():
        raise SchemaError("kmeans requires a frame with no missing values; impute first")
    n, d = X.shape
    if k < 1 or k > n:
        raise KExceedsRows(f"need 1 <= k <= n_rows, got k={k}, n={n}")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    Z = (X - mean) / scale

    rng = np.random.default_rng(seed)
    centroids = np.empty((k, d))
    centroids[0] = Z[rng.integers(n)]
    closest_sq = np.sum((Z - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest_sq.sum()
        if total == 0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=closest_sq / total))
        centroids[j] = Z[pick]
        closest_sq = np.minimum(closest_sq, np.sum((Z - centroids[j]) ** 2, axis=1))

    prev_inertia = np.inf
    ids = np.zeros(n, dtype=np.int64)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = (
            np.sum(Z * Z, axis=1)[:, None]
            + np.sum(centroids * centroids, axis=1)[None, :]
            - 2.0 * Z @ centroids.T
        )
        ids = np.argmin(d2, axis=1)
        inertia = float(np.maximum(d2[np.arange(n), ids], 0.0).sum())
        assert inertia <= prev_inertia + 1e-9, "k-means inertia increased"
        prev_inertia = inertia

        new_centroids = centroids.copy()
        for j in range(k):
            members = ids == j
            if members.any():
                new_centroids[j] = Z[members].mean(axis=0)
        empty = [j for j in range(k) if not np.any(ids == j)]
        if empty:
            dist_to_own = np.maximum(d2[np.arange(n), ids], 0.0)
            farthest = np.argsort(-dist_to_own, kind="stable")
            for slot, j in enumerate(empty):
                new_centroids[j] = Z[farthest[slot]]
        movement = float(np.max(np.sqrt(np.sum((new_centroids - centroids) ** 2, axis=1))))
        centroids = new_centroids
        if movement < tol:
            break

    d2 = (
        np.sum(Z * Z, axis=1)[:, None]
        + np.sum(centroids * centroids, axis=1)[None, :]
        - 2.0 * Z @ centroids.T
    )
    ids = np.argmin(d2, axis=1)
    inertia = float(np.maximum(d2[np.arange(n), ids], 0.0).sum())
    labels = tuple(f"cluster {j}" for j in range(k))
    return KMeansAssignment(
        segment_ids=np.asarray(ids, dtype=np.int64),
        labels=labels,
        source="kmeans",
        centroids=centroids * scale + mean,
        inertia=inertia,
        n_iter=n_iter,
    )


def segment_metrics(
    ds: ScoredDataset,
    seg: SegmentAssignment,
    metric: str = "mae",
    threshold: float = 0.5,
) -> SegmentMetricsTable:
    """Decompose an error metric across segments with lift over the overall.

    The overall value is recomputed on the full dataset, never averaged
    from segments. When overall and segment values are both 0 the lift is
    reported as 1.0 and marked degenerate; single-class segments report an
    absent AUC.
    """
    check_metric(metric, ds.y_true)
    if len(seg.segment_ids) != ds.n_rows:
        raise SchemaMismatch("segment assignment does not match dataset rows")
    overall = metric_value(metric, ds.y_true, ds.y_pred, threshold)
    rows = []
    for sid, label in enumerate(seg.labels):
        members = seg.segment_ids == sid
        count = int(members.sum())
        if count == 0:
            rows.append(SegmentMetricRow(label, 0, None, None))
            continue
        value = metric_value(metric, ds.y_true[members], ds.y_pred[members], threshold)
        lift, degenerate = _lift(value, overall)
        rows.append(SegmentMetricRow(label, count, value, lift, degenerate))
    return SegmentMetricsTable(metric, overall, ds.n_rows, rows)


def weak_region_scan(
    ds: ScoredDataset,
    features: Sequence[str],
    bins: int = 5,
    min_rows: int = DEFAULT_MIN_ROWS,
    metric: str | None = None,
    threshold: float = 0.5,
) -> list[WeakRegion]:
    """Rank (feature, value-range) regions by error lift.

    Every quantile-binned region with at least ``min_rows`` rows is scored
    by segment metric / overall metric and sorted by descending lift, ties
    broken by row count descending then feature name. Regions below
    ``min_rows`` are omitted to suppress noise.
    """
    metric = metric or default_error_metric(ds.y_true)
    check_metric(metric, ds.y_true)
    overall = metric_value(metric, ds.y_true, ds.y_pred, threshold)
    regions: list[WeakRegion] = []
    for feature in features:
        seg = segment_by_bins(ds.frame, feature, bins)
        table = segment_metrics(ds, seg, metric, threshold)
        for row in table.segments:
            if row.rows < min_rows or row.value is None or row.lift is None:
                continue
            regions.append(
                WeakRegion(feature, row.label, row.rows, metric, row.value, row.lift)
            )
    regions.sort(key=lambda r: (-r.lift, -r.rows, r.feature, r.range_label))
    return regions


def fit_gap(
    train: ScoredDataset,
    test: ScoredDataset,
    feature: str | None = None,
    edges: Sequence[float] | int | None = None,
    metric: str | None = None,
    overfit_gap_fraction: float = 0.2,
    underfit_multiplier: float = 1.5,
    threshold: float = 0.5,
) -> FitGapTable:
    """Per-segment train/test gap with overfit/underfit flags.

    The segmentation basis (feature plus edges) is applied identically to
    both datasets; with no basis a single "all" segment is used. A segment
    is flagged overfit when gap > overfit_gap_fraction * overall test
    metric while its train metric sits below the overall train metric, and
    underfit when both its train and test metrics exceed
    underfit_multiplier times the respective overall values.
    """
    if train.frame.names != test.frame.names:
        raise SchemaMismatch("train and test frames disagree on columns")
    metric = metric or default_error_metric(train.y_true)
    check_metric(metric, train.y_true)
    check_metric(metric, test.y_true)

    if feature is None:
        labels = ("all",)
        train_ids = np.zeros(train.n_rows, dtype=np.int64)
        test_ids = np.zeros(test.n_rows, dtype=np.int64)
    else:
        if edges is None:
            raise ValueError("fit_gap needs explicit edges when a feature is given")
        if isinstance(edges, (int, np.integer)):
            # derive shared quantile edges from train so both sets bin identically
            col = train.frame.column(feature)
            if not isinstance(col, NumericColumn):
                raise SchemaError(f"fit_gap needs a numeric feature, got {feature!r}")
            edges = np.unique(np.quantile(col.observed(), np.linspace(0, 1, int(edges) + 1)))
            if edges.size == 1:
                edges = np.array([edges[0], edges[0]])
        seg_train = segment_by_bins(train.frame, feature, edges)
        seg_test = segment_by_bins(test.frame, feature, edges)
        # align label spaces: extras like "missing" may exist on one side only
        labels = tuple(dict.fromkeys(seg_train.labels + seg_test.labels))
        index = {lbl: i for i, lbl in enumerate(labels)}
        train_ids = np.array([index[seg_train.labels[i]] for i in seg_train.segment_ids])
        test_ids = np.array([index[seg_test.labels[i]] for i in seg_test.segment_ids])

    overall_train = metric_value(metric, train.y_true, train.y_pred, threshold)
    overall_test = metric_value(metric, test.y_true, test.y_pred, threshold)

    rows = []
    for sid, label in enumerate(labels):
        tr = train_ids == sid
        te = test_ids == sid
        tr_n, te_n = int(tr.sum()), int(te.sum())
        tr_v = metric_value(metric, train.y_true[tr], train.y_pred[tr], threshold) if tr_n else None
        te_v = metric_value(metric, test.y_true[te], test.y_pred[te], threshold) if te_n else None
        if tr_v is None or te_v is None:
            rows.append(FitGapRow(label, tr_n, te_n, tr_v, te_v, None, "ok"))
            continue
        gap = te_v - tr_v
        flag = "ok"
        if gap > overfit_gap_fraction * overall_test and tr_v < overall_train:
            flag = "overfit"
        elif tr_v > underfit_multiplier * overall_train and te_v > underfit_multiplier * overall_test:
            flag = "underfit"
        rows.append(FitGapRow(label, tr_n, te_n, tr_v, te_v, gap, flag))
    return FitGapTable(metric, overall_train, overall_test, rows)


# ---------------------------------------------------------------------------
# Robustness
# ---------------------------------------------------------------------------


def perturbation_test(
    model: Scorer,
    frame: FeatureFrame,
    noise_fraction: float = 0.05,
    n_repeats: int = 5,
    seed: int = 0,
) -> SensitivityReport:
    """Noise-sensitivity test: perturb one feature at a time and rescore.

    Each numeric feature independently receives Gaussian noise with
    std = noise_fraction * feature std while the others stay fixed;
    |prediction delta| statistics are pooled over rows and repeats.
    Deterministic for a fixed seed.
    """
    baseline = np.asarray(model.predict(frame), dtype=np.float64)
    rng = np.random.default_rng(seed)
    rows = []
    for name in frame.numeric_names():
        col = frame.column(name)
        std = float(col.observed().std()) if col.observed().size else 0.0
        noise_std = noise_fraction * std
        deltas = []
        for _ in range(n_repeats):
            noise = rng.normal(0.0, 1.0, frame.n_rows) * noise_std
            perturbed = frame.replace_column(
                NumericColumn(name, col.values + noise, col.missing_mask)
            )
            pred = np.asarray(model.predict(perturbed), dtype=np.float64)
            deltas.append(np.abs(pred - baseline))
        pooled = np.concatenate(deltas)
        rows.append(
            FeatureSensitivity(
                feature=name,
                noise_scale=noise_fraction,
                mean_abs_delta=float(pooled.mean()),
                p95_abs_delta=float(np.percentile(pooled, 95)),
            )
        )
    return SensitivityReport(rows, n_repeats, seed)


def invariance_test(
    model: Scorer,
    frame: FeatureFrame,
    irrelevant: Sequence[str],
    mode: str = "permute",
    seed: int = 0,
    tolerance: float = 1e-9,
) -> InvarianceReport:
    """Alter declared-irrelevant features and check predictions stand still.

    ``permute`` shuffles each irrelevant column with the run seed;
    ``constant`` sets it to its median (numeric) or mode (categorical).
    Rows whose |prediction delta| exceeds ``tolerance`` are reported.
    """
    if mode not in ("permute", "constant"):
        raise ValueError(f"unknown invariance mode {mode!r}")
    for name in irrelevant:
        if name not in frame:
            raise UnknownFeature(name)
    if not irrelevant:
        return InvarianceReport(0.0, 0.0, [], tolerance, mode)

    baseline = np.asarray(model.predict(frame), dtype=np.float64)
    rng = np.random.default_rng(seed)
    altered = frame
    for name in irrelevant:
        col = altered.column(name)
        if mode == "permute":
            perm = rng.permutation(frame.n_rows)
            altered = altered.replace_column(col.take(perm))
        else:
            if isinstance(col, NumericColumn):
                observed = col.observed()
                fill = float(np.median(observed)) if observed.size else 0.0
                altered = altered.replace_column(
                    NumericColumn(name, np.full(frame.n_rows, fill), np.zeros(frame.n_rows, bool))
                )
            else:
                observed = col.codes[~col.missing_mask]
                fill = int(np.argmax(np.bincount(observed, minlength=len(col.labels)))) if observed.size else 0
                labels = col.labels if col.labels else ("__EMPTY__",)
                altered = altered.replace_column(
                    CategoricalColumn(
                        name,
                        np.full(frame.n_rows, fill, dtype=np.int64),
                        labels,
                        np.zeros(frame.n_rows, bool),
                    )
                )
    pred = np.asarray(model.predict(altered), dtype=np.float64)
    deltas = np.abs(pred - baseline)
    violating = np.nonzero(deltas > tolerance)[0]
    return InvarianceReport(
        max_abs_delta=float(deltas.max()) if deltas.size else 0.0,
        mean_abs_delta=float(deltas.mean()) if deltas.size else 0.0,
        violating_rows=[int(i) for i in violating],
        tolerance=tolerance,
        mode=mode,
    )
