"""
Evaluation workflow: paired MF / FF / ANN_FF runs on fresh evaluation records

Every requested method consumes the identical evaluation records, generated
from the "evaluate" seed stream so they never overlap the training corpus.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
from tqdm import tqdm

from config.experiment import ExperimentConfig
from config.settings import SHOW_PROGRESS
from dataset.generator import Dataset, generate
from dataset.spec import DatasetSpec
from dataset.storage import save_dataset
from estimators.network import denoise_fidelity_audit, estimate_batch
from estimators.results import EstimationResult, EstimatorKind, results_to_frame
from nn.models import Model
from nn.serialization import load_model
from quantum.channels import ChannelFamily
from utils import metrics
from utils.run_directory import RunDirectory, k_label, write_csv, write_json

logger = logging.getLogger(__name__)

_ROLE_BY_KIND = {EstimatorKind.FF: "ff", EstimatorKind.ANN_FF: "ann_ff"}


def evaluation_spec(config: ExperimentConfig, k_factor: float) -> DatasetSpec:
    return DatasetSpec.for_family(
        config.family, k_factor,
        master_seed=config.master_seed,
        settings=config.dataset,
        stream="evaluate",
        instances_per_point=config.evaluation.eval_instances(config.family),
    )


def _load_models(run: RunDirectory, family: str, k_factor: float,
                 kinds: Sequence[EstimatorKind]) -> Dict[str, Model]:
    models = {}
    for kind in kinds:
        if not kind.needs_network:
            continue
        role = _ROLE_BY_KIND[kind]
        models[role] = load_model(run.require(run.model_path(family, k_factor, role), f"{kind.value} model"))
        if kind.needs_autoencoder and "autoencoder" not in models:
            models["autoencoder"] = load_model(
                run.require(run.model_path(family, k_factor, "autoencoder"), "autoencoder")
            )
    return models


def _mf_chunk(task) -> List[EstimationResult]:
    """Worker: MF estimates for a slice of records"""
    chis, family, truths, k_factor, seeds = task
    return estimate_batch(EstimatorKind.MF, chis, family, truths=truths, k_factor=k_factor, seeds=seeds)


def _run_mf(dataset: Dataset, family: ChannelFamily, workers: int) -> List[EstimationResult]:
    chis = [r.noisy for r in dataset]
    truths = [r.params for r in dataset]
    seeds = dataset.seeds()
    k_factor = dataset.spec.k_factor
    size = max(1, len(chis) // (workers * 8)) if workers > 1 else len(chis)
    tasks = [(chis[i:i + size], family, truths[i:i + size], k_factor, seeds[i:i + size])
             for i in range(0, len(chis), size)]
    progress = dict(total=len(tasks), desc=f"MF {family.value} {k_label(k_factor)}", unit="chunk",
                    disable=not SHOW_PROGRESS or len(tasks) == 1, leave=False)
    if workers == 1:
        chunks = [_mf_chunk(t) for t in tqdm(tasks, **progress)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(tqdm(pool.map(_mf_chunk, tasks), **progress))
    return [result for chunk in chunks for result in chunk]


def evaluate_signal_level(
    config: ExperimentConfig,
    run: RunDirectory,
    k_factor: float,
    kinds: Sequence[EstimatorKind],
    workers: int = 1,
) -> Tuple[pd.DataFrame, Optional[Dict]]:
    """
    Run every requested estimator on the same evaluation records of one k

    Returns:
        (per-record results frame, denoising audit or None)

    Raises:
        MissingArtifactError: a model needed by a requested method is absent
    """
    family = ChannelFamily.parse(config.family)
    models = _load_models(run, family.value, k_factor, kinds)
    dataset = generate(evaluation_spec(config, k_factor), workers)
    save_dataset(dataset, run.dataset_path(family.value, k_factor, "evaluate"))

    chis = [r.noisy for r in dataset]
    truths = [r.params for r in dataset]
    frames = []
    for kind in kinds:
        logger.info(f"{kind.value} on {len(dataset)} {family.value} {k_label(k_factor)} records")
        if kind is EstimatorKind.MF:
            results = _run_mf(dataset, family, workers)
        else:
            results = estimate_batch(kind, chis, family, ae_model=models.get("autoencoder"),
                                     ff_model=models[_ROLE_BY_KIND[kind]], truths=truths,
                                     k_factor=k_factor, seeds=dataset.seeds())
        frame = results_to_frame(results)
        frame.insert(4, "grid_index", [r.grid_index for r in dataset])
        frame.insert(5, "instance_index", [r.instance_index for r in dataset])
        frames.append(frame)

    audit = None
    if "autoencoder" in models:
        audit = denoise_fidelity_audit(models["autoencoder"], chis, [r.ideal for r in dataset]).to_dict()
    return pd.concat(frames, ignore_index=True), audit


def summarize(frame: pd.DataFrame, config: ExperimentConfig) -> Dict[str, pd.DataFrame]:
    """Summary tables recomputable from the per-record frame alone"""
    family = ChannelFamily.parse(config.family)
    thresholds = config.evaluation
    per_point = metrics.success_percentages(frame, family, thresholds.residue_cutoff)
    tables = {
        "mean_residues": metrics.mean_residues(frame, family),
        "overall_residues": metrics.overall_residues(frame, family),
        "success_points": per_point,
        "success_rates": metrics.aggregate_success(per_point, family, thresholds.success_thresholds),
        "residue_histograms": metrics.residue_histograms(frame, family, thresholds.histogram_bins,
                                                         thresholds.histogram_range),
        "paired_bootstrap": metrics.paired_comparisons(frame, family, resamples=thresholds.bootstrap_resamples,
                                                       seed=config.master_seed),
    }
    if family is ChannelFamily.CP:
        tables["cp_success"] = metrics.cp_success(frame, thresholds.cp_absolute_cutoff,
                                                  thresholds.cp_relative_cutoff)
    return tables


def _records(table: pd.DataFrame) -> List[Dict]:
    return table.astype(object).where(table.notna(), None).to_dict(orient="records")


def evaluate_all(
    config: ExperimentConfig,
    run: RunDirectory,
    methods: Optional[Sequence[str]] = None,
    workers: Optional[int] = None,
) -> Dict:
    """
    Evaluate every k of the config and write records, tables and the JSON summary

    Returns:
        The summary dict written to evaluation/<family>_summary.json
    """
    kinds = [EstimatorKind.parse(m) for m in (methods or config.methods)]
    workers = workers or config.workers
    family = config.family

    frames, audits = [], {}
    for k_factor in config.dataset.k_factors:
        frame, audit = evaluate_signal_level(config, run, k_factor, kinds, workers)
        frames.append(frame)
        if audit is not None:
            audits[k_label(k_factor)] = audit
    records = pd.concat(frames, ignore_index=True)
    write_csv(records, run.evaluation_dir / f"{family}_records.csv")

    tables = summarize(records, config)
    for name, table in tables.items():
        write_csv(table, run.evaluation_dir / f"{family}_{name}.csv")

    summary = {
        "family": family,
        "methods": [k.value for k in kinds],
        "k_factors": list(config.dataset.k_factors),
        "records_per_method": int(len(records) // max(len(kinds), 1)),
        "thresholds": config.evaluation.model_dump(),
        "overall_residues": _records(tables["overall_residues"]),
        "success_rates": _records(tables["success_rates"]),
        "paired_bootstrap": _records(tables["paired_bootstrap"]),
        "denoise_audit": audits,
    }
    if "cp_success" in tables:
        summary["cp_success"] = _records(tables["cp_success"])
    write_json(run.evaluation_dir / f"{family}_summary.json", summary)
    return summary
