"""
Estimators Module
Parameter extraction from measured process matrices

Estimators:
    - MF: maximum-fidelity grid search over analytic process matrices
    - FF: feed-forward head on the noisy chi
    - ANN_FF: autoencoder denoising followed by the feed-forward head
"""

from .features import augment_dc, chi_images, dc_diagonal_features, head_inputs, permute_dc_blocks
from .fidelity_search import mf_estimate
from .network import (
    FidelityAudit,
    ann_ff_estimate,
    denoise_fidelity_audit,
    estimate_batch,
    ff_estimate,
)
from .results import EstimationResult, EstimatorKind, parameter_residues, results_to_frame

__all__ = [
    'augment_dc',
    'chi_images',
    'dc_diagonal_features',
    'head_inputs',
    'permute_dc_blocks',
    'mf_estimate',
    'FidelityAudit',
    'ann_ff_estimate',
    'denoise_fidelity_audit',
    'estimate_batch',
    'ff_estimate',
    'EstimationResult',
    'EstimatorKind',
    'parameter_residues',
    'results_to_frame',
]
