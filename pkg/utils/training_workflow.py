"""
Two-stage network training per family and signal level

For every k the autoencoder is trained first (noisy chi images -> ideal chi
images); the ANN_FF head is then trained on the autoencoder's outputs for the
same training split. The FF-only head is trained on the noisy images directly.

Augmented DC splits hold only permuted views, while validation and evaluation
see un-permuted matrices. The autoencoder and the FF head therefore train on
the views plus each source's original. Denoised views are put back into the
original block order before they reach the ANN_FF head.
"""

import logging
from dataclasses import replace
from typing import Dict, List, Optional

import numpy as np

from config.experiment import ExperimentConfig
from config.settings import CODE_VERSION
from dataset.generator import Dataset, split
from dataset.storage import load_dataset
from estimators.features import feature_count, head_inputs, restore_dc_layout
from estimators.network import denoise
from estimators.results import EstimatorKind, normalize_params
from nn.models import Autoencoder, FeedForwardNet, Model
from nn.serialization import save_model
from nn.training import TrainReport, train
from quantum.channels import ChannelFamily
from utils.run_directory import RunDirectory, k_label, write_csv, write_json

logger = logging.getLogger(__name__)

# seed stream 3 is reserved for model initialisation, shuffling and splits
MODEL_STREAM = 3
_STAGES = {"split": 0, "autoencoder": 1, "ann_ff": 2, "ff": 3}


def stage_seed(master_seed: int, family, k_factor: float, stage: str) -> int:
    family = ChannelFamily.parse(family)
    entropy = [int(master_seed), MODEL_STREAM, list(ChannelFamily).index(family),
               int(round(k_factor * 1_000_000)), _STAGES[stage]]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


def build_autoencoder(config: ExperimentConfig, seed: int) -> Autoencoder:
    family = ChannelFamily.parse(config.family)
    arch = config.architecture.resolve(family.value)
    return Autoencoder(
        dim=4 ** family.n_qubits,
        kernel=arch["kernel"],
        latent=arch["latent"],
        channels=config.architecture.encoder_channels,
        momentum=config.architecture.batchnorm_momentum,
        epsilon=config.architecture.batchnorm_epsilon,
        seed=seed,
    )


def build_head(config: ExperimentConfig, seed: int) -> FeedForwardNet:
    family = ChannelFamily.parse(config.family)
    arch = config.architecture.resolve(family.value)
    return FeedForwardNet(feature_count(family), arch["width_factor"], arch["branches"], seed=seed)


def source_originals(dataset: Dataset) -> Dataset:
    """One un-permuted record per source, in first-seen order"""
    seen, originals = set(), []
    for record in dataset:
        if record.source_key not in seen:
            seen.add(record.source_key)
            originals.append(record.original())
    return Dataset(replace(dataset.spec, augment=False), originals, dataset.skipped)


def with_originals(dataset: Dataset) -> Dataset:
    """Augmentation views plus the original of every source; non-augmented sets are returned as is"""
    if not dataset.spec.augment:
        return dataset
    return Dataset(dataset.spec, source_originals(dataset).records + dataset.records, dataset.skipped)


def _denoised_training_images(ae: Model, dataset: Dataset, images: np.ndarray) -> np.ndarray:
    denoised = denoise(ae, images)
    if dataset.spec.augment:
        denoised = restore_dc_layout(denoised, [r.view for r in dataset])
    return denoised


def _stage_summary(report: TrainReport) -> Dict:
    return {
        "epochs": report.epochs,
        "best_epoch": report.best_epoch,
        "stopped_early": report.stopped_early,
        "final_validation_mse": report.final_validation_mse,
        "validation_below_training": report.validation_below_training,
    }


def _save_stage(run: RunDirectory, config: ExperimentConfig, k_factor: float, role: str,
                model: Model, report: TrainReport, extra: Dict):
    metadata = {
        "family": config.family,
        "k_factor": k_factor,
        "master_seed": config.master_seed,
        "code_version": CODE_VERSION,
        "final_validation_mse": report.final_validation_mse,
        **extra,
    }
    save_model(model, run.model_path(config.family, k_factor, role), metadata)
    write_csv(report.to_frame(), run.loss_path(config.family, k_factor, role))


def train_signal_level(
    config: ExperimentConfig,
    run: RunDirectory,
    k_factor: float,
    methods: Optional[List[str]] = None,
) -> Dict:
    """
    Train the networks of one (family, k) pair from its stored training dataset

    Returns:
        Per-stage summary: epochs, best epoch, final validation MSE
    """
    family = ChannelFamily.parse(config.family)
    kinds = [EstimatorKind.parse(m) for m in (methods or config.methods)]
    dataset = load_dataset(run.require(run.dataset_path(family.value, k_factor), "training dataset"))
    train_set, val_set = split(dataset, config.training.split_ratio,
                               seed=stage_seed(config.master_seed, family, k_factor, "split"))
    logger.info(f"{family.value} {k_label(k_factor)}: {len(train_set)} training / "
                f"{len(val_set)} validation records")

    hp = config.training
    full_set = with_originals(train_set)
    x_train, x_val = full_set.noisy_images(), val_set.noisy_images()
    y_train = normalize_params(family, full_set.parameters())
    y_val = normalize_params(family, val_set.parameters())
    summary: Dict = {"k_factor": k_factor, "train_records": len(train_set), "validation_records": len(val_set)}

    if EstimatorKind.ANN_FF in kinds:
        ae, ae_report = train(
            build_autoencoder(config, stage_seed(config.master_seed, family, k_factor, "autoencoder")),
            (x_train, full_set.ideal_images()), (x_val, val_set.ideal_images()), hp,
            rng_seed=stage_seed(config.master_seed, family, k_factor, "autoencoder"),
            label=f"{family.value} {k_label(k_factor)} autoencoder",
        )
        _save_stage(run, config, k_factor, "autoencoder", ae, ae_report, {"role": "autoencoder"})
        summary["autoencoder"] = _stage_summary(ae_report)

        head, head_report = train(
            build_head(config, stage_seed(config.master_seed, family, k_factor, "ann_ff")),
            (head_inputs(_denoised_training_images(ae, full_set, x_train), family), y_train),
            (head_inputs(denoise(ae, x_val), family), y_val), hp,
            rng_seed=stage_seed(config.master_seed, family, k_factor, "ann_ff"),
            label=f"{family.value} {k_label(k_factor)} ANN_FF head",
        )
        _save_stage(run, config, k_factor, "ann_ff", head, head_report, {"role": "ff", "input": "denoised"})
        summary["ann_ff"] = _stage_summary(head_report)

    if EstimatorKind.FF in kinds:
        head, head_report = train(
            build_head(config, stage_seed(config.master_seed, family, k_factor, "ff")),
            (head_inputs(x_train, family), y_train), (head_inputs(x_val, family), y_val), hp,
            rng_seed=stage_seed(config.master_seed, family, k_factor, "ff"),
            label=f"{family.value} {k_label(k_factor)} FF head",
        )
        _save_stage(run, config, k_factor, "ff", head, head_report, {"role": "ff", "input": "noisy"})
        summary["ff"] = _stage_summary(head_report)

    return summary


def train_all(config: ExperimentConfig, run: RunDirectory, methods: Optional[List[str]] = None) -> Dict:
    """Train every signal level of the config and write the training summary"""
    levels = [train_signal_level(config, run, k, methods) for k in config.dataset.k_factors]
    summary = {"family": config.family, "levels": levels}
    write_json(run.training_dir / f"{config.family}_summary.json", summary)
    return summary
