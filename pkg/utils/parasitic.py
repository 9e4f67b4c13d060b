"""
Robustness study: DC estimators applied to anisotropic Pauli channels

The experimental channel is modelled as a Pauli channel whose total error
probability p = p1 + p2 + p3 is set to a target value, with the split between
p1, p2 and p3 jittered around p/3 each. DC estimators trained on ideal
depolarizing channels are then asked for p at several rescale factors.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt
from tqdm import tqdm

from config.experiment import ExperimentConfig
from config.settings import RECONSTRUCTION_RETRIES, SHOW_PROGRESS
from dataset.spec import STREAMS
from estimators.network import estimate_batch
from estimators.results import EstimatorKind
from nn.serialization import load_model
from quantum.channels import ChannelSpec
from quantum.tomography import simulate_noisy_chi
from utils.exceptions import ConfigError, DataError, MissingArtifactError, ReconstructionError
from utils.run_directory import RunDirectory, k_label, write_csv, write_json

logger = logging.getLogger(__name__)

FAMILY = "DC"


def jittered_probabilities(p: float, jitter: float, rng: np.random.Generator) -> np.ndarray:
    """
    Pauli probabilities (p0, p1, p2, p3) with p1 + p2 + p3 = p

    The shares of p are (1 - jitter) / 3 plus jitter times a flat Dirichlet draw,
    so jitter 0 gives the isotropic (depolarizing) split.

    Raises:
        ConfigError: p outside [0, 1], or a jitter that could make a probability negative
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"Target probability must lie in [0, 1], got {p}")
    if not 0.0 <= jitter < 1.0:
        raise ConfigError(f"Jitter must lie in [0, 1), got {jitter}")
    shares = (1.0 - jitter) / 3.0 + jitter * rng.dirichlet(np.ones(3))
    probs = np.concatenate([[1.0 - p], p * shares])
    if probs.min() < 0:
        raise ConfigError(f"Jitter produced negative probabilities: {probs}")
    return probs


def nearest_k(rescale: float, available: Sequence[float]) -> float:
    """Training signal level closest to a rescale factor on a log scale (ties go to the smaller k)"""
    if not available:
        raise MissingArtifactError("No trained DC signal levels available")
    return min(sorted(available), key=lambda k: abs(math.log(k) - math.log(rescale)))


def _entropy(master_seed: int, p_index: int, r_index: int, repetition: int, slot: int) -> List[int]:
    return [int(master_seed), STREAMS["parasitic"], p_index, r_index, repetition, slot]


def _simulate_repetition(task) -> Optional[Dict]:
    """Worker: one jittered channel, its noisy chi and the seed that produced it"""
    master_seed, p_index, r_index, repetition, p_exp, rescale, jitter, n_base = task
    rng = np.random.default_rng(np.random.SeedSequence(_entropy(master_seed, p_index, r_index, repetition, 0)))
    probs = jittered_probabilities(p_exp, jitter, rng)
    channel = ChannelSpec.pauli(*probs)
    retrying = Retrying(
        stop=stop_after_attempt(RECONSTRUCTION_RETRIES + 1),
        retry=retry_if_exception_type(ReconstructionError),
    )
    try:
        for attempt in retrying:
            with attempt:
                slot = attempt.retry_state.attempt_number
                seed = int(np.random.SeedSequence(_entropy(master_seed, p_index, r_index, repetition, slot))
                           .generate_state(1, dtype=np.uint64)[0])
                noisy, _ = simulate_noisy_chi(channel, rescale, n_base, rng_seed=seed)
    except RetryError:
        logger.warning(f"p_exp={p_exp} rescale={rescale} repetition {repetition}: reconstruction failed, skipped")
        return None
    return {
        "p_exp": p_exp, "rescale": rescale, "repetition": repetition, "seed": seed,
        "p0": probs[0], "p1": probs[1], "p2": probs[2], "p3": probs[3],
        "true_p": float(probs[1:].sum()), "chi": noisy,
    }


def simulate(config: ExperimentConfig, workers: int = 1) -> List[Dict]:
    """Every (p_exp, rescale, repetition) simulation, in that order; failed ones are dropped"""
    study = config.parasitic
    tasks = [
        (config.master_seed, pi, ri, rep, p_exp, rescale, study.jitter, config.dataset.n_base)
        for pi, p_exp in enumerate(study.p_exp)
        for ri, rescale in enumerate(study.rescale_factors)
        for rep in range(study.repetitions)
    ]
    progress = dict(total=len(tasks), desc="Parasitic channels", unit="rec", disable=not SHOW_PROGRESS, leave=False)
    if workers == 1:
        rows = [_simulate_repetition(t) for t in tqdm(tasks, **progress)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(tasks) // (workers * 8))
            rows = list(tqdm(pool.map(_simulate_repetition, tasks, chunksize=chunk), **progress))
    return [row for row in rows if row is not None]


_REQUIRED_ROLES = {
    EstimatorKind.FF: ("ff",),
    EstimatorKind.ANN_FF: ("autoencoder", "ann_ff"),
}


def trained_levels(run: RunDirectory, k_factors: Sequence[float], kind: EstimatorKind) -> List[float]:
    """Signal levels at which every model `kind` needs is present"""
    roles = _REQUIRED_ROLES[kind]
    return [k for k in k_factors if all(run.model_path(FAMILY, k, role).exists() for role in roles)]


def _load_dc_models(run: RunDirectory, k_factor: float, kinds: Sequence[EstimatorKind]) -> Dict:
    models = {}
    for kind in kinds:
        if kind is EstimatorKind.FF:
            models["ff"] = load_model(run.require(run.model_path(FAMILY, k_factor, "ff"), "DC FF model"))
        elif kind is EstimatorKind.ANN_FF:
            models["autoencoder"] = load_model(
                run.require(run.model_path(FAMILY, k_factor, "autoencoder"), "DC autoencoder"))
            models["ann_ff"] = load_model(run.require(run.model_path(FAMILY, k_factor, "ann_ff"), "DC ANN_FF model"))
    return models


def run_study(
    config: ExperimentConfig,
    run: RunDirectory,
    methods: Optional[Sequence[str]] = None,
    workers: Optional[int] = None,
) -> Dict:
    """
    Simulate the parasitic channels and estimate p with every requested method

    Residues are measured against the realized p1 + p2 + p3 of each channel.

    Returns:
        Summary dict (also written to parasitic/summary.json)
    """
    kinds = [EstimatorKind.parse(m) for m in (methods or config.methods)]
    workers = workers or config.workers
    trained = {kind: trained_levels(run, config.dataset.k_factors, kind) for kind in kinds if kind.needs_network}
    for kind, levels in trained.items():
        if not levels:
            raise MissingArtifactError(f"No trained DC {kind.value} models in {run.models_dir}")

    rows = simulate(config, workers)
    if not rows:
        raise DataError("Every parasitic-channel reconstruction failed")
    frame = pd.DataFrame([{key: value for key, value in row.items() if key != "chi"} for row in rows])
    true_p = frame["true_p"].to_numpy()

    for kind in kinds:
        name = kind.value.lower()
        column = np.full(len(frame), np.nan)
        if kind.needs_network:
            chosen = np.array([nearest_k(r, trained[kind]) for r in frame["rescale"]])
            frame[f"model_k_{name}"] = chosen
            groups = [(k, np.flatnonzero(chosen == k)) for k in sorted(set(chosen.tolist()))]
        else:
            groups = [(None, np.arange(len(frame)))]
        for model_k, positions in groups:
            models = _load_dc_models(run, model_k, [kind]) if model_k is not None else {}
            results = estimate_batch(
                kind, [rows[i]["chi"] for i in positions], FAMILY,
                ae_model=models.get("autoencoder"), ff_model=models.get(kind.value.lower()),
                truths=[(true_p[i],) for i in positions],
            )
            column[positions] = [r.estimates[0] for r in results]
        frame[f"est_p_{name}"] = column
        frame[f"residue_{name}"] = np.abs(column - frame["true_p"].to_numpy())

    write_csv(frame, run.parasitic_dir / "records.csv")
    table = summarize(frame, kinds)
    write_csv(table, run.parasitic_dir / "summary.csv")

    summary = {
        "family": FAMILY,
        "methods": [k.value for k in kinds],
        "jitter": config.parasitic.jitter,
        "repetitions": config.parasitic.repetitions,
        "rows": int(len(frame)),
        "skipped": int(len(config.parasitic.p_exp) * len(config.parasitic.rescale_factors)
                       * config.parasitic.repetitions - len(frame)),
        "model_k": {kind.value: {k_label(r): nearest_k(r, levels) for r in config.parasitic.rescale_factors}
                    for kind, levels in trained.items()},
        "table": table.astype(object).where(table.notna(), None).to_dict(orient="records"),
    }
    write_json(run.parasitic_dir / "summary.json", summary)
    logger.info(f"Parasitic study: {len(frame)} rows, methods {', '.join(summary['methods'])}")
    return summary


def summarize(frame: pd.DataFrame, kinds: Sequence[EstimatorKind]) -> pd.DataFrame:
    """Mean and standard deviation of the estimated p per (p_exp, rescale), one column pair per method"""
    grouped = frame.groupby(["p_exp", "rescale"], sort=True)
    table = grouped["true_p"].agg(["mean", "std"]).rename(columns={"mean": "mean_true_p", "std": "std_true_p"})
    for kind in kinds:
        name = kind.value.lower()
        stats = grouped[[f"est_p_{name}", f"residue_{name}"]].agg(["mean", "std"])
        stats.columns = [f"{stat}_{col}" for col, stat in stats.columns]
        table = table.join(stats)
    table["count"] = grouped.size()
    return table.reset_index()
