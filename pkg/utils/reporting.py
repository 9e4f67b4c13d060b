"""
Consolidated run report

Merges the config, dataset manifest, training, evaluation and parasitic
summaries of a run directory into report/report.json plus a flat
report/summary.csv. Only deterministic content is included (no timestamps,
wall times or absolute paths), so regenerating a report is byte-identical.
"""

import logging
from pathlib import Path
from typing import Dict, List

import pandas as pd

from config.experiment import ExperimentConfig
from config.settings import CODE_VERSION
from estimators.results import EstimatorKind
from utils.run_directory import RunDirectory, read_json, write_csv, write_json

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _family_summaries(directory: Path) -> Dict[str, Dict]:
    summaries = {}
    for path in sorted(directory.glob("*_summary.json")):
        data = read_json(path)
        summaries[data.get("family", path.stem.split("_")[0])] = data
    return summaries


def build_report(run: RunDirectory) -> Dict:
    """
    Report dict for a run directory

    Sections that are missing are listed under "missing" and the report is
    marked partial; nothing here raises for an incomplete run.
    """
    missing: List[str] = []
    config_data = read_json(run.config_path)
    if config_data is None:
        missing.append("config")
        config = None
    else:
        config = ExperimentConfig.load(run.config_path)

    manifest = read_json(run.manifest_path)
    if manifest is None:
        missing.append("datasets")

    training = _family_summaries(run.training_dir)
    evaluation = _family_summaries(run.evaluation_dir)
    parasitic = read_json(run.parasitic_dir / "summary.json")

    families = [config.family] if config is not None else sorted(set(training) | set(evaluation))
    requested = list(config.methods) if config is not None else [k.value for k in EstimatorKind]
    presence = {}
    for family in families:
        if family not in training:
            missing.append(f"training:{family}")
        if family not in evaluation:
            missing.append(f"evaluation:{family}")
        evaluated = set(evaluation.get(family, {}).get("methods", []))
        presence[family] = {kind.value: kind.value in evaluated for kind in EstimatorKind}
        for method in requested:
            if family in evaluation and method not in evaluated:
                missing.append(f"evaluation:{family}:{method}")
    if parasitic is None:
        missing.append("parasitic")

    return {
        "schema_version": SCHEMA_VERSION,
        "code_version": CODE_VERSION,
        "master_seed": config.master_seed if config is not None else None,
        "config": config_data,
        "datasets": manifest,
        "training": training,
        "evaluation": evaluation,
        "parasitic": parasitic,
        "methods_present": presence,
        "missing": missing,
        "partial": bool(missing),
    }


def _summary_frame(evaluation: Dict[str, Dict]) -> pd.DataFrame:
    frames = []
    for family, summary in sorted(evaluation.items()):
        rows = summary.get("overall_residues", [])
        if rows:
            frame = pd.DataFrame(rows)
            frame.insert(0, "family", family)
            frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=["family", "method", "k_factor"])
    return pd.concat(frames, ignore_index=True)


def write_report(run: RunDirectory) -> Dict:
    """Write report/report.json and report/summary.csv; returns the report dict"""
    report = build_report(run)
    write_json(run.report_dir / "report.json", report)
    write_csv(_summary_frame(report["evaluation"]), run.report_dir / "summary.csv")
    if report["partial"]:
        logger.warning(f"Partial run, missing: {', '.join(report['missing'])}")
    logger.info(f"Report written to {run.report_dir}")
    return report
