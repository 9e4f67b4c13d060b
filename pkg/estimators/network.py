"""
Network estimators: FF-only heads and the autoencoder + FF cascade (ANN_FF)

Model metadata conventions (written by the training workflow):
    autoencoder: {"role": "autoencoder", "family": ...}
    FF head:     {"role": "ff", "family": ..., "input": "noisy" | "denoised"}

FF heads regress parameters scaled into [0, 1] by the family box; outputs are
mapped back and clamped before they become estimates.
"""

import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from estimators.features import chi_images, feature_count, head_inputs
from estimators.fidelity_search import mf_estimate
from estimators.results import EstimationResult, EstimatorKind, denormalize_params
from nn.models import Model, predict
from quantum.channels import ChannelFamily
from quantum.linalg import project_to_physical
from quantum.process import ProcessMatrix, fidelity
from utils.exceptions import ConfigError, EstimatorMismatchError

logger = logging.getLogger(__name__)

QUANTILES = (0.05, 0.5, 0.95)


def check_autoencoder(model: Model, family) -> None:
    family = ChannelFamily.parse(family)
    meta = model.metadata or {}
    dim = 4 ** family.n_qubits
    if model.architecture.get("kind") != "autoencoder" or model.architecture.get("dim") != dim:
        raise EstimatorMismatchError(f"Model is not a {dim}x{dim} autoencoder for {family.value}")
    if meta.get("family") not in (None, family.value):
        raise EstimatorMismatchError(f"Autoencoder was trained for {meta.get('family')}, not {family.value}")


def check_head(model: Model, family, input_kind: str) -> None:
    family = ChannelFamily.parse(family)
    meta = model.metadata or {}
    arch = model.architecture
    if arch.get("kind") != "feedforward":
        raise EstimatorMismatchError(f"Expected a feed-forward head, got {arch.get('kind')}")
    if arch.get("in_features") != feature_count(family):
        raise EstimatorMismatchError(
            f"Head takes {arch.get('in_features')} features, {family.value} provides {feature_count(family)}"
        )
    if arch.get("branches") != len(family.parameter_names):
        raise EstimatorMismatchError(f"Head has {arch.get('branches')} branches for {family.value}")
    if meta.get("family") not in (None, family.value):
        raise EstimatorMismatchError(f"Head was trained for {meta.get('family')}, not {family.value}")
    if meta.get("input") not in (None, input_kind):
        raise EstimatorMismatchError(f"Head expects {meta.get('input')} inputs, got {input_kind}")


def denoise(ae_model: Model, images: np.ndarray) -> np.ndarray:
    """Inference-mode autoencoder pass over (N, 2, d, d) images"""
    return predict(ae_model, images)


def _head_estimates(ff_model: Model, images: np.ndarray, family) -> np.ndarray:
    return denormalize_params(family, predict(ff_model, head_inputs(images, family)))


def _results(method, family, estimates, truths, k_factor, seeds, elapsed) -> List[EstimationResult]:
    per_record = elapsed / max(len(estimates), 1)
    truths = truths if truths is not None else [None] * len(estimates)
    seeds = seeds if seeds is not None else [None] * len(estimates)
    return [
        EstimationResult(family, method, tuple(est), truth, per_record, k_factor, seed)
        for est, truth, seed in zip(estimates, truths, seeds)
    ]


def ff_estimate(model: Model, chi: ProcessMatrix, family, truth=None) -> EstimationResult:
    """FF head applied directly to the noisy chi"""
    return estimate_batch(EstimatorKind.FF, [chi], family, ff_model=model,
                          truths=None if truth is None else [truth])[0]


def ann_ff_estimate(ae_model: Model, ff_model: Model, chi: ProcessMatrix, family, truth=None) -> EstimationResult:
    """Autoencoder denoising followed by the FF head"""
    return estimate_batch(EstimatorKind.ANN_FF, [chi], family, ae_model=ae_model, ff_model=ff_model,
                          truths=None if truth is None else [truth])[0]


def estimate_batch(
    kind,
    chis: Sequence[ProcessMatrix],
    family,
    ae_model: Optional[Model] = None,
    ff_model: Optional[Model] = None,
    truths: Optional[Sequence[Sequence[float]]] = None,
    k_factor: Optional[float] = None,
    seeds: Optional[Sequence[int]] = None,
) -> List[EstimationResult]:
    """
    Estimate parameters for a batch of process matrices, in input order

    Args:
        kind: MF, FF or ANN_FF
        chis: measured process matrices
        family: channel family
        ae_model: autoencoder (ANN_FF only)
        ff_model: feed-forward head (FF and ANN_FF)
        truths: true parameters per record, for residues
        k_factor, seeds: carried into the results

    Raises:
        EstimatorMismatchError: a model does not fit the family or input convention
    """
    kind = EstimatorKind.parse(kind)
    family = ChannelFamily.parse(family)
    if not chis:
        return []

    if kind is EstimatorKind.MF:
        truths = truths if truths is not None else [None] * len(chis)
        seeds = seeds if seeds is not None else [None] * len(chis)
        return [mf_estimate(chi, family, truth, k_factor, seed) for chi, truth, seed in zip(chis, truths, seeds)]

    if ff_model is None:
        raise ConfigError(f"{kind.value} needs a trained feed-forward head")
    start = time.perf_counter()
    images = chi_images(chis)
    if kind is EstimatorKind.ANN_FF:
        if ae_model is None:
            raise ConfigError("ANN_FF needs a trained autoencoder")
        check_autoencoder(ae_model, family)
        check_head(ff_model, family, "denoised")
        images = denoise(ae_model, images)
    else:
        check_head(ff_model, family, "noisy")
    estimates = _head_estimates(ff_model, images, family)
    return _results(kind, family, estimates, truths, k_factor, seeds, time.perf_counter() - start)


# ============================================================================
# Denoising audit
# ============================================================================

@dataclass
class FidelityAudit:
    """Fidelity to the ideal chi of projected autoencoder outputs, and of the raw inputs"""
    fidelities: np.ndarray
    raw_fidelities: np.ndarray

    @staticmethod
    def _quantiles(values: np.ndarray) -> Dict[str, float]:
        q = np.quantile(values, QUANTILES)
        return {"q05": float(q[0]), "q50": float(q[1]), "q95": float(q[2])}

    @property
    def quantiles(self) -> Dict[str, float]:
        return self._quantiles(self.fidelities)

    @property
    def raw_quantiles(self) -> Dict[str, float]:
        return self._quantiles(self.raw_fidelities)

    def to_dict(self) -> Dict:
        return {
            "count": int(len(self.fidelities)),
            "denoised": {**self.quantiles, "mean": float(np.mean(self.fidelities)),
                         "min": float(np.min(self.fidelities))},
            "raw_mle": {**self.raw_quantiles, "mean": float(np.mean(self.raw_fidelities)),
                        "min": float(np.min(self.raw_fidelities))},
        }


def denoise_fidelity_audit(
    ae_model: Model,
    noisy_set: Sequence[ProcessMatrix],
    ideal_set: Sequence[ProcessMatrix],
) -> FidelityAudit:
    """
    Fidelity of each denoised chi (projected to the nearest valid matrix) to its ideal

    The raw MLE inputs are scored against the same ideals for comparison.
    """
    if len(noisy_set) != len(ideal_set) or not noisy_set:
        raise ConfigError("Denoising audit needs equally sized, non-empty noisy and ideal sets")
    outputs = denoise(ae_model, chi_images(noisy_set))
    denoised, raw = [], []
    for image, noisy, ideal in zip(outputs, noisy_set, ideal_set):
        projected = project_to_physical(image[0] + 1j * image[1])
        denoised.append(fidelity(projected, ideal))
        raw.append(fidelity(noisy, ideal))
    audit = FidelityAudit(np.array(denoised), np.array(raw))
    logger.info(f"Denoising audit over {len(noisy_set)} records: median {audit.quantiles['q50']:.5f} "
                f"(raw MLE median {audit.raw_quantiles['q50']:.5f})")
    return audit
