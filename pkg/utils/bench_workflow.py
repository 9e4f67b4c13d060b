"""
Benchmark commands: gen-data, train, evaluate, parasitic, report

Each command locks the run directory, stores the effective config next to its
outputs and prints a short step banner before delegating to the workflow
modules.
"""

import logging
from typing import Dict, List, Optional, Sequence

from config.experiment import ExperimentConfig
from dataset.generator import generate
from dataset.spec import DatasetSpec
from dataset.storage import file_digest, save_dataset
from utils.evaluation import evaluate_all
from utils.parasitic import run_study
from utils.reporting import write_report
from utils.run_directory import RunDirectory, k_label, read_json, write_json
from utils.training_workflow import train_all

logger = logging.getLogger(__name__)


def print_step(title: str):
    print("\n" + "=" * 70)
    print(title)
    print("=" * 70)


def _run_directory(config: ExperimentConfig) -> RunDirectory:
    return RunDirectory(config.output_dir)


# ==================== GEN-DATA ====================

def cmd_gen_data(config: ExperimentConfig, workers: Optional[int] = None) -> Dict:
    """
    Generate and store the training dataset of every configured k

    All specs are built (and validated) before anything is written.

    Returns:
        The dataset manifest: file name -> sha256, record and skip counts
    """
    workers = workers or config.workers
    specs = [DatasetSpec.for_family(config.family, k, config.master_seed, config.dataset)
             for k in config.dataset.k_factors]
    run = _run_directory(config)
    with run.lock():
        config.save(run.config_path)
        print_step(f"GENERATING {config.family} DATASETS ({len(specs)} signal level(s))")
        manifest = read_json(run.manifest_path) or {"files": {}}
        for spec in specs:
            dataset = generate(spec, workers)
            path = save_dataset(dataset, run.dataset_path(config.family, spec.k_factor))
            manifest["files"][path.name] = {
                "family": spec.family,
                "k_factor": spec.k_factor,
                "stream": spec.stream,
                "records": len(dataset),
                "skipped": dataset.skipped,
                "sha256": file_digest(path),
            }
            print(f"  ✅ {path.name}: {len(dataset)} records ({dataset.skipped} skipped)")
        write_json(run.manifest_path, manifest)
    return manifest


# ==================== TRAIN ====================

def cmd_train(config: ExperimentConfig, methods: Optional[Sequence[str]] = None) -> Dict:
    """Train the autoencoder and heads for every configured k"""
    run = _run_directory(config)
    with run.lock():
        config.save(run.config_path)
        print_step(f"TRAINING {config.family} MODELS")
        summary = train_all(config, run, list(methods) if methods else None)
        for level in summary["levels"]:
            stages = ", ".join(
                f"{stage} {level[stage]['final_validation_mse']:.3e}"
                for stage in ("autoencoder", "ann_ff", "ff") if stage in level
            )
            print(f"  ✅ {k_label(level['k_factor'])}: validation MSE {stages}")
    return summary


# ==================== EVALUATE ====================

def cmd_evaluate(config: ExperimentConfig, methods: Optional[Sequence[str]] = None,
                 workers: Optional[int] = None) -> Dict:
    """Run the requested estimators on fresh evaluation records"""
    run = _run_directory(config)
    with run.lock():
        config.save(run.config_path)
        print_step(f"EVALUATING {config.family}: {', '.join(methods or config.methods)}")
        summary = evaluate_all(config, run, methods, workers)
        for row in summary["overall_residues"]:
            means = ", ".join(f"{key[5:]} {value:.4f}" for key, value in row.items()
                              if key.startswith("mean_") and value is not None)
            print(f"  {row['method']:>6} {k_label(row['k_factor'])}: {means}")
    return summary


# ==================== PARASITIC ====================

def cmd_parasitic(config: ExperimentConfig, methods: Optional[Sequence[str]] = None,
                  workers: Optional[int] = None) -> Dict:
    """Robustness of the DC estimators against anisotropic Pauli channels"""
    run = _run_directory(config)
    with run.lock():
        config.save(run.config_path)
        print_step("PARASITIC-PROCESS STUDY (DC)")
        summary = run_study(config, run, methods, workers)
        print(f"  ✅ {summary['rows']} rows ({summary['skipped']} skipped)")
    return summary


# ==================== REPORT ====================

def cmd_report(run_dir) -> Dict:
    """Consolidate every summary of a run directory"""
    run = RunDirectory(run_dir)
    with run.lock():
        print_step(f"REPORT {run.root}")
        report = write_report(run)
        status = "partial, missing " + ", ".join(report["missing"]) if report["partial"] else "complete"
        print(f"  ✅ report.json written ({status})")
    return report


def resolve_methods(option: Optional[str]) -> Optional[List[str]]:
    """CLI --method value to estimator names; None keeps the config's list"""
    if option is None:
        return None
    if option == "all":
        return ["MF", "FF", "ANN_FF"]
    return [option.upper().replace("-", "_")]
