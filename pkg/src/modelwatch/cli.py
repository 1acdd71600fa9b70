"""Command-line interface.

Subcommands run either the full monitoring pipeline (``monitor``) or a
single section (``quality``, ``drift``, ``concept-drift``, ``conformal``,
``weakness``, ``robustness``); ``report`` re-renders a saved report file.
Exit codes are a stable CI contract: 0 all pass, 3 warns only, 4 any fail,
2 usage or config error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import MonitorConfig, parse_config
from .data import ScoredDataset, load_csv
from .errors import ConfigError, ModelWatchError
from .report import (
    MonitoringReport,
    collect_alerts,
    concept_section,
    drift_section,
    exit_code_for,
    quality_section,
    render_report,
    robustness_section,
    run_monitor,
    uncertainty_section,
    weakness_section,
    _json_safe,
)

SECTION_COMMANDS = {
    "quality": "data_quality",
    "drift": "drift",
    "concept-drift": "concept_drift",
    "conformal": "uncertainty",
    "weakness": "weakness",
    "robustness": "robustness",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modelwatch",
        description="Validation and monitoring toolkit for tabular predictive models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_command(name: str, help_text: str):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the JSON config")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=None, help="write output to this path instead of stdout")
        return cmd

    monitor = add_run_command("monitor", "run the full monitoring pipeline")
    monitor.add_argument("--format", choices=("json", "text"), default="json")

    add_run_command("quality", "data-quality profile of the current dataset")
    add_run_command("drift", "reference-to-current distribution shift scan")
    add_run_command("concept-drift", "concept vs input drift diagnosis")
    add_run_command("conformal", "conformal uncertainty summary")
    add_run_command("weakness", "segment weakness tables")
    add_run_command("robustness", "noise sensitivity and invariance tests")

    report = sub.add_parser("report", help="re-render a saved report")
    report.add_argument("--in", dest="in_path", required=True, help="saved report JSON")
    report.add_argument("--format", choices=("json", "text"), default="text")
    report.add_argument("--out", default=None)
    return parser


def _load_config(args) -> MonitorConfig:
    cfg = parse_config(args.config)
    if args.seed is not None:
        doc = dict(cfg.effective)
        doc["seed"] = args.seed
        from .config import build_config
        from pathlib import Path

        cfg = build_config(doc, base_dir=Path(args.config).parent)
    return cfg


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_section(cfg: MonitorConfig, section_name: str) -> dict:
    reference = load_csv(cfg.reference_path, cfg.schema, cfg.missing_tokens)
    current = load_csv(cfg.current_path, cfg.schema, cfg.missing_tokens)

    def scored(ds, which: str) -> ScoredDataset:
        if not isinstance(ds, ScoredDataset):
            raise ConfigError(f"{which} dataset must carry target and prediction columns")
        return ds

    if section_name == "data_quality":
        return quality_section(cfg, current)
    if section_name == "drift":
        section, _ = drift_section(cfg, scored(reference, "reference"), scored(current, "current"))
        return section
    if section_name == "concept_drift":
        return concept_section(cfg, scored(reference, "reference"), scored(current, "current"))
    if section_name == "uncertainty":
        return uncertainty_section(cfg, scored(current, "current"))
    if section_name == "weakness":
        train = None
        if cfg.train_path is not None:
            train = load_csv(cfg.train_path, cfg.schema, cfg.missing_tokens)
        return weakness_section(cfg, scored(current, "current"), train)
    if section_name == "robustness":
        return robustness_section(cfg, scored(current, "current"))
    raise ValueError(section_name)


def _exit_code_for_alerts(alerts: list[dict]) -> int:
    severities = {a["severity"] for a in alerts}
    if "fail" in severities:
        return 4
    if "warn" in severities:
        return 3
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    try:
        if args.command == "report":
            with open(args.in_path, encoding="utf-8") as fh:
                doc = json.load(fh)
            report = MonitoringReport(
                run_id=doc["run_id"],
                created_at=doc["created_at"],
                status=doc["status"],
                config_digest=doc["config_digest"],
                config=doc["config"],
                datasets=doc["datasets"],
                sections=doc["sections"],
                alerts=doc["alerts"],
            )
            _emit(render_report(report, args.format), args.out)
            return 0

        cfg = _load_config(args)
        if args.command == "monitor":
            report = run_monitor(cfg)
            _emit(render_report(report, args.format), args.out)
            return exit_code_for(report)

        section_name = SECTION_COMMANDS[args.command]
        section = _json_safe(_run_section(cfg, section_name))
        alerts = collect_alerts({section_name: section})
        doc = {"section": section_name, "result": section, "alerts": alerts}
        _emit(json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n", args.out)
        return _exit_code_for_alerts(alerts)

    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except ModelWatchError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except Exception as exc:  # keep the CLI contract: internal errors exit 1
        sys.stderr.write(f"internal error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
