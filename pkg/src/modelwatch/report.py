"""Monitoring report assembly: the full pipeline behind the CLI.

A run executes data-quality profiling on the current dataset, the
reference-to-current drift scan, concept-drift classification, performance
tracking, and the optional conformal/weakness/robustness sections, then
collects every warn/fail verdict into the alert list. Reports serialize
deterministically: stable key order, no wall-clock content when
SOURCE_DATE_EPOCH is set, and a run id derived from the config digest and
dataset fingerprints.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import conformal as cp
from . import outcome, quality
from .concept import ClassifyDriftConfig, classify_drift
from .config import ALL_DIRECTIONS, MonitorConfig
from .data import FeatureFrame, NumericColumn, ScoredDataset, load_csv
from .errors import ConfigError, ModelWatchError
from .external import ExternalModel
from .shift import DriftScanConfig, apply_thresholds, drift_scan

SECTION_ORDER = (
    "data_quality",
    "drift",
    "concept_drift",
    "performance",
    "uncertainty",
    "weakness",
    "robustness",
)


@dataclass(frozen=True)
class MonitoringReport:
    run_id: str
    created_at: str
    status: str  # complete | incomplete
    config_digest: str
    config: dict
    datasets: dict
    sections: dict
    alerts: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "status": self.status,
            "config_digest": self.config_digest,
            "config": self.config,
            "datasets": self.datasets,
            "sections": self.sections,
            "alerts": self.alerts,
        }


def _json_safe(value):
    """Recursively convert to JSON-serializable types; non-finite floats
    become strings so documents stay strictly standard JSON."""
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not np.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return v
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _column_hash(parts: list[bytes]) -> str:
    digest = hashlib.sha256()
    for part in parts:
        digest.update(part)
    return digest.hexdigest()[:16]  # 64-bit fingerprint


def fingerprint_dataset(obj: FeatureFrame | ScoredDataset) -> dict:
    """Row count plus a 64-bit per-column content hash, so reports are
    auditable without embedding the data itself."""
    frame = obj.frame if isinstance(obj, ScoredDataset) else obj
    columns: dict[str, str] = {}
    for col in frame.columns:
        if isinstance(col, NumericColumn):
            columns[col.name] = _column_hash(
                [b"num", np.nan_to_num(col.values).tobytes(), col.missing_mask.tobytes()]
            )
        else:
            columns[col.name] = _column_hash(
                [b"cat", col.codes.tobytes(), "\x1f".join(col.labels).encode(), col.missing_mask.tobytes()]
            )
    if isinstance(obj, ScoredDataset):
        columns["y_true"] = _column_hash([obj.y_true.tobytes()])
        columns["y_pred"] = _column_hash([obj.y_pred.tobytes()])
        if obj.y_pred_lower is not None:
            columns["y_pred_lower"] = _column_hash([obj.y_pred_lower.tobytes()])
            columns["y_pred_upper"] = _column_hash([obj.y_pred_upper.tobytes()])
        if obj.timestamps is not None:
            ts = obj.timestamps
            raw = ts.tobytes() if ts.dtype != object else "\x1f".join(map(str, ts)).encode()
            columns["timestamp"] = _column_hash([raw])
    return {"rows": frame.n_rows, "columns": columns}


def config_digest(effective: dict) -> str:
    canonical = json.dumps(_json_safe(effective), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _created_at() -> str:
    # SOURCE_DATE_EPOCH (reproducible-build convention) pins the timestamp
    # so identical runs emit byte-identical reports.
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _verdict(cfg: MonitorConfig, key: str, value: float) -> str:
    warn, fail = cfg.threshold_pair(key)
    return apply_thresholds(value, warn, fail, ALL_DIRECTIONS[key])


def _scan_config(cfg: MonitorConfig) -> DriftScanConfig:
    return DriftScanConfig(
        bins=cfg.bins,
        epsilon=cfg.epsilon,
        numeric_metrics=cfg.numeric_metrics,
        categorical_metrics=cfg.categorical_metrics,
        multivariate_metrics=cfg.multivariate_metrics,
        thresholds=cfg.thresholds,
        n_permutations=cfg.n_permutations,
        seed=cfg.seed,
        variance_fraction=cfg.variance_fraction,
    )


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------


def quality_section(cfg: MonitorConfig, current: FeatureFrame | ScoredDataset) -> dict:
    frame = current.frame if isinstance(current, ScoredDataset) else current
    profile = quality.profile_missingness(frame)
    missing = {}
    for name, item in profile.per_column.items():
        missing[name] = {
            "missing_count": item.missing_count,
            "missing_fraction": item.missing_fraction,
            "column": name,
            "verdict": _verdict(cfg, "missing_fraction", item.missing_fraction),
        }

    violations = quality.validate_rules(frame, cfg.schema)
    per_column: dict[str, int] = {}
    for v in violations:
        per_column[v.column] = per_column.get(v.column, 0) + 1
    rules = {
        "count": len(violations),
        "per_column": per_column,
        "subject": "rules",
        "verdict": "fail" if violations else "pass",
        "examples": [
            {"row": v.row, "column": v.column, "kind": v.kind, "observed": v.observed}
            for v in violations[:10]
        ],
    }

    outliers = {}
    for name in frame.numeric_names():
        col = frame.column(name)
        observed = col.observed()
        if observed.size < 4:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            z = quality.outliers_zscore(col, cfg.z_threshold)
            iqr = quality.outliers_iqr(col, cfg.iqr_multiplier)
        frac_z = float(z.flags.sum()) / observed.size
        frac_iqr = float(iqr.flags.sum()) / observed.size
        worst = max(frac_z, frac_iqr)
        outliers[name] = {
            "column": name,
            "zscore_flagged": int(z.flags.sum()),
            "iqr_flagged": int(iqr.flags.sum()),
            "flag_fraction": worst,
            "verdict": _verdict(cfg, "outlier_fraction", worst),
        }

    return {
        "status": "ok",
        "row_complete_fraction": profile.row_complete_fraction,
        "missingness": missing,
        "rule_violations": rules,
        "outliers": outliers,
    }


def drift_section(cfg: MonitorConfig, reference: ScoredDataset, current: ScoredDataset) -> tuple[dict, list]:
    results = drift_scan(reference, current, _scan_config(cfg))
    section = {"status": "ok", "results": [r.to_json_dict() for r in results]}
    return section, results


def _impute_numeric_medians(frame: FeatureFrame) -> tuple[FeatureFrame, list[str]]:
    touched = []
    out = frame
    for name in frame.numeric_names():
        col = frame.column(name)
        if col.missing_mask.any() and col.observed().size:
            out = quality.impute(out, {name: "median"})
            touched.append(name)
    return out, touched


def concept_section(
    cfg: MonitorConfig,
    reference: ScoredDataset,
    current: ScoredDataset,
    input_scan=None,
) -> dict:
    ref_frame, imputed_ref = _impute_numeric_medians(reference.frame)
    cur_frame, imputed_cur = _impute_numeric_medians(current.frame)
    if imputed_ref or imputed_cur:
        reference = ScoredDataset(ref_frame, reference.y_true, reference.y_pred)
        current = ScoredDataset(cur_frame, current.y_true, current.y_pred)
    diag = classify_drift(
        reference,
        current,
        ClassifyDriftConfig(
            p_threshold=cfg.concept_p_threshold,
            k=cfg.concept_k,
            match_metric=cfg.concept_match_metric,
            residual_test=cfg.concept_residual_test,
            scan=_scan_config(cfg),
        ),
        input_scan=input_scan,
    )
    severity = {
        "no_drift": "pass",
        "input_drift": "warn",
        "concept_drift": "fail",
        "both": "fail",
    }[diag.verdict]
    failing_features = sorted(
        {r.feature for r in diag.input_drift_evidence if r.verdict == "fail" and r.feature}
    )
    return {
        "status": "ok",
        "subject": "concept_drift",
        "verdict": severity,
        "diagnosis": {
            "drift_type": diag.verdict,
            "residual_test": {
                "test": diag.residual_test.test_name,
                "statistic": diag.residual_test.statistic,
                "p_value": diag.residual_test.p_value,
                "p_threshold": cfg.concept_p_threshold,
            },
            "mean_match_distance": diag.mean_match_distance,
            "input_drift_features": failing_features,
            "imputed_features": sorted(set(imputed_ref + imputed_cur)),
            "notes": diag.notes,
        },
    }


def _ratio(cur: float, ref: float) -> float:
    if ref == 0:
        return 1.0 if cur == 0 else float("inf")
    return cur / ref


def performance_section(cfg: MonitorConfig, reference: ScoredDataset, current: ScoredDataset) -> dict:
    binary = outcome.default_error_metric(reference.y_true) == "error_rate" and (
        outcome.default_error_metric(current.y_true) == "error_rate"
    )
    if binary:
        metrics = ("error_rate", "auc")
        tracked = "error_rate"
    else:
        metrics = ("mae", "rmse")
        tracked = "mae"

    def values(ds: ScoredDataset) -> dict:
        out = {}
        for m in metrics:
            v = outcome.metric_value(m, ds.y_true, ds.y_pred, 0.5)
            out[m] = v
            if m == "error_rate":
                out["accuracy"] = None if v is None else 1.0 - v
        return out

    ref_vals = values(reference)
    cur_vals = values(current)
    ratio = _ratio(cur_vals[tracked], ref_vals[tracked])
    return {
        "status": "ok",
        "prediction_type": "binary" if binary else "regression",
        "tracked_metric": tracked,
        "reference": ref_vals,
        "current": cur_vals,
        "subject": tracked,
        "ratio_current_over_reference": ratio,
        "verdict": _verdict(cfg, "perf_ratio", ratio),
    }


def uncertainty_section(cfg: MonitorConfig, current: ScoredDataset) -> dict:
    if cfg.calibration_path is None:
        return {"status": "not_configured"}
    calibration = load_csv(cfg.calibration_path, cfg.schema, cfg.missing_tokens)
    if not isinstance(calibration, ScoredDataset):
        raise ConfigError("calibration dataset must carry target and prediction columns")
    cal = cp.conformal_fit(calibration, cfg.conformal_alpha)
    lo, hi = cp.conformal_interval(cal, current.y_pred)
    coverage = cp.empirical_coverage(np.column_stack([lo, hi]), current.y_true)
    target = 1.0 - cfg.conformal_alpha
    shortfall = max(0.0, target - coverage)
    section = {
        "status": "ok",
        "mode": cal.mode,
        "alpha": cal.alpha,
        "q_hat": cal.q_hat,
        "n_calibration": cal.n_calibration,
        "achieved_coverage": coverage,
        "target_coverage": target,
        "subject": "coverage",
        "coverage_shortfall": shortfall,
        "verdict": _verdict(cfg, "coverage_shortfall", shortfall),
    }
    if outcome.default_error_metric(current.y_true) == "error_rate":
        preds = current.y_pred
        if np.all((preds >= 0) & (preds <= 1)):
            section["brier_score"] = cp.brier_score(preds, current.y_true)
    return section


def weakness_section(
    cfg: MonitorConfig, current: ScoredDataset, train: ScoredDataset | None
) -> dict:
    if not cfg.segmentation_features:
        return {"status": "not_configured"}
    regions = outcome.weak_region_scan(
        current,
        cfg.segmentation_features,
        bins=cfg.segmentation_bins,
        min_rows=cfg.min_rows,
    )
    section: dict = {
        "status": "ok",
        "metric": regions[0].metric if regions else outcome.default_error_metric(current.y_true),
        "regions": [
            {
                "feature": r.feature,
                "range": r.range_label,
                "rows": r.rows,
                "value": r.value,
                "lift": r.lift,
            }
            for r in regions[:20]
        ],
    }
    if train is not None:
        gaps = {}
        for feature in cfg.segmentation_features:
            table = outcome.fit_gap(train, current, feature, cfg.segmentation_bins)
            gaps[feature] = {
                "metric": table.metric,
                "overall_train": table.overall_train,
                "overall_test": table.overall_test,
                "segments": [
                    {
                        "label": row.label,
                        "train_rows": row.train_rows,
                        "test_rows": row.test_rows,
                        "train_value": row.train_value,
                        "test_value": row.test_value,
                        "gap": row.gap,
                        "flag": row.flag,
                    }
                    for row in table.rows
                ],
            }
        section["fit_gap"] = gaps
    return section


def robustness_section(cfg: MonitorConfig, current: ScoredDataset) -> dict:
    if cfg.model_command is None:
        return {"status": "not_configured"}
    model = ExternalModel(cfg.model_command, cfg.model_timeout)
    sensitivity = outcome.perturbation_test(
        model,
        current.frame,
        noise_fraction=cfg.noise_fraction,
        n_repeats=cfg.noise_repeats,
        seed=cfg.seed,
    )
    section: dict = {
        "status": "ok",
        "noise_fraction": cfg.noise_fraction,
        "n_repeats": cfg.noise_repeats,
        "sensitivity": [
            {
                "feature": row.feature,
                "mean_abs_delta": row.mean_abs_delta,
                "p95_abs_delta": row.p95_abs_delta,
            }
            for row in sensitivity.rows
        ],
    }
    if cfg.irrelevant_features:
        inv = outcome.invariance_test(
            model,
            current.frame,
            cfg.irrelevant_features,
            mode=cfg.invariance_mode,
            seed=cfg.seed,
            tolerance=cfg.invariance_tolerance,
        )
        section["invariance"] = {
            "subject": "invariance",
            "mode": inv.mode,
            "max_abs_delta": inv.max_abs_delta,
            "mean_abs_delta": inv.mean_abs_delta,
            "violating_rows": inv.violating_rows[:50],
            "n_violations": len(inv.violating_rows),
            "tolerance": inv.tolerance,
            "verdict": "fail" if inv.violating_rows else "pass",
        }
    return section


# ---------------------------------------------------------------------------
# Alerts and assembly
# ---------------------------------------------------------------------------


def collect_alerts(sections: dict) -> list[dict]:
    """Every warn/fail verdict in the section tree becomes exactly one alert."""
    alerts: list[dict] = []

    def walk(node, section: str, path: str):
        if isinstance(node, dict):
            verdict = node.get("verdict")
            if verdict in ("warn", "fail"):
                subject = node.get("feature") or node.get("column") or node.get("subject") or path
                metric = node.get("metric")
                detail = f" [{metric}]" if metric and metric != subject else ""
                alerts.append(
                    {
                        "section": section,
                        "subject": str(subject) + detail,
                        "severity": verdict,
                        "message": f"{section}: {subject}{detail} -> {verdict}",
                    }
                )
            for key, child in node.items():
                walk(child, section, f"{path}/{key}" if path else str(key))
        elif isinstance(node, list):
            for i, child in enumerate(node):
                walk(child, section, f"{path}/{i}")

    for name in sections:
        walk(sections[name], name, "")
    return alerts


def run_monitor(cfg: MonitorConfig) -> MonitoringReport:
    """Execute the full monitoring pipeline under a parsed config."""
    reference = load_csv(cfg.reference_path, cfg.schema, cfg.missing_tokens)
    current = load_csv(cfg.current_path, cfg.schema, cfg.missing_tokens)
    if not isinstance(reference, ScoredDataset) or not isinstance(current, ScoredDataset):
        raise ConfigError("monitoring needs scored datasets: schema must define target and prediction")
    train = None
    if cfg.train_path is not None:
        train = load_csv(cfg.train_path, cfg.schema, cfg.missing_tokens)

    datasets = {
        "reference": fingerprint_dataset(reference),
        "current": fingerprint_dataset(current),
    }
    if train is not None:
        datasets["train"] = fingerprint_dataset(train)

    sections: dict = {}
    status = "complete"

    def run_stage(name: str, fn):
        # a broken stage yields a structured error section and an incomplete
        # report instead of aborting the whole run
        nonlocal status
        try:
            return fn()
        except Exception as exc:
            status = "incomplete"
            sections[name] = {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
            return None

    result = run_stage("data_quality", lambda: quality_section(cfg, current))
    if result is not None:
        sections["data_quality"] = result

    scan_results = None
    result = run_stage("drift", lambda: drift_section(cfg, reference, current))
    if result is not None:
        sections["drift"], scan_results = result

    result = run_stage(
        "concept_drift", lambda: concept_section(cfg, reference, current, scan_results)
    )
    if result is not None:
        sections["concept_drift"] = result

    result = run_stage("performance", lambda: performance_section(cfg, reference, current))
    if result is not None:
        sections["performance"] = result

    result = run_stage("uncertainty", lambda: uncertainty_section(cfg, current))
    if result is not None:
        sections["uncertainty"] = result

    result = run_stage("weakness", lambda: weakness_section(cfg, current, train))
    if result is not None:
        sections["weakness"] = result

    result = run_stage("robustness", lambda: robustness_section(cfg, current))
    if result is not None:
        sections["robustness"] = result

    sections = {name: _json_safe(sections[name]) for name in SECTION_ORDER if name in sections}
    alerts = collect_alerts(sections)
    digest = config_digest(cfg.effective)
    run_id = hashlib.sha256(
        (digest + json.dumps(datasets, sort_keys=True)).encode()
    ).hexdigest()[:16]
    return MonitoringReport(
        run_id=run_id,
        created_at=_created_at(),
        status=status,
        config_digest=digest,
        config=_json_safe(cfg.effective),
        datasets=datasets,
        sections=sections,
        alerts=alerts,
    )


def render_report(report: MonitoringReport, format: str = "json") -> str:
    """Render a report as canonical JSON or a human-readable text summary."""
    doc = _json_safe(report.to_json_dict())
    if format == "json":
        return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"
    if format != "text":
        raise ValueError(f"unknown format {format!r}")

    lines = [
        f"modelwatch report {report.run_id} ({report.status})",
        f"created: {report.created_at}",
        "",
    ]
    if report.alerts:
        lines.append(f"ALERTS: {len(report.alerts)}")
        for alert in report.alerts:
            lines.append(f"  [{alert['severity'].upper()}] {alert['section']}: {alert['subject']}")
    else:
        lines.append("ALERTS: none")
    lines.append("")
    for name, section in report.sections.items():
        status = section.get("status", "ok")
        lines.append(f"{name}: {status}")
        if name == "drift" and status == "ok":
            fails = [r for r in section["results"] if r["verdict"] == "fail"]
            warns = [r for r in section["results"] if r["verdict"] == "warn"]
            lines.append(
                f"  {len(section['results'])} results, {len(warns)} warn, {len(fails)} fail"
            )
        if name == "concept_drift" and status == "ok":
            lines.append(f"  drift_type: {section['diagnosis']['drift_type']}")
        if name == "performance" and status == "ok":
            lines.append(
                f"  {section['tracked_metric']}: ratio {section['ratio_current_over_reference']}"
            )
    return "\n".join(lines) + "\n"


def exit_code_for(report: MonitoringReport) -> int:
    """CI exit contract: 0 all pass, 3 warns only, 4 any fail, 1 incomplete run."""
    if report.status != "complete":
        return 1
    severities = {a["severity"] for a in report.alerts}
    if "fail" in severities:
        return 4
    if "warn" in severities:
        return 3
    return 0
