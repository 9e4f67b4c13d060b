"""
Maximum-fidelity (MF) estimator

Grid search over analytic process matrices for the candidate that maximizes
the fidelity with the measured chi. 1D families use a 0.001 grid, GAD a
0.01 x 0.01 grid refined to 0.001 around the coarse optimum. The first
maximum in ascending parameter order wins ties.
"""

import logging
import math
import time
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

from quantum.channels import TWO_PI, ChannelFamily, ChannelSpec
from quantum.linalg import validate_density_matrix
from quantum.process import ProcessMatrix, analytic_chi, fidelity_many
from estimators.results import EstimationResult, EstimatorKind
from utils.exceptions import ConfigError, DimensionError

logger = logging.getLogger(__name__)

FINE_STEP = 0.001
COARSE_STEP = 0.01
REFINE_HALF_WIDTH = 0.01


def parameter_grid(family, step: float = FINE_STEP) -> np.ndarray:
    """
    (M, n_params) candidate parameters in ascending order

    DC: p in [0, 1]; CP: phi in [0, 2pi); GAD: (eta, gamma) in [0, 1]^2, eta-major.
    """
    family = ChannelFamily.parse(family)
    if not step > 0:
        raise ConfigError(f"Grid step must be > 0, got {step}")
    if family is ChannelFamily.CP:
        return np.arange(0.0, TWO_PI, step)[:, None]
    count = int(math.floor(1.0 / step + 1e-9))
    axis = np.round(np.arange(count + 1) * step, 12)
    if family is ChannelFamily.DC:
        return axis[:, None]
    if family is ChannelFamily.GAD:
        eta, gamma = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([eta.ravel(), gamma.ravel()])
    raise ConfigError(f"No fidelity search for the {family.value} family")


def _candidate_stack(family: ChannelFamily, params: np.ndarray) -> np.ndarray:
    return np.stack([analytic_chi(ChannelSpec(family, tuple(p))).chi for p in params])


@lru_cache(maxsize=None)
def _cached_candidates(family: ChannelFamily, step: float) -> Tuple[np.ndarray, np.ndarray]:
    params = parameter_grid(family, step)
    logger.debug(f"Building {len(params)} {family.value} candidates at step {step}")
    if family is ChannelFamily.CP:
        # unitary channels have rank-one chi; keep the state vector
        stack = _candidate_stack(family, params)
        _, vecs = np.linalg.eigh(stack)
        return params, vecs[:, :, -1]
    return params, _candidate_stack(family, params)


def _pure_fidelities(chi: np.ndarray, states: np.ndarray) -> np.ndarray:
    """F(chi, |v><v|) = <v| chi |v>"""
    values = np.einsum("mi,ij,mj->m", states.conj(), chi, states).real
    return np.clip(values, 0.0, 1.0)


def _refine_axis(center: float) -> np.ndarray:
    offsets = np.arange(-round(REFINE_HALF_WIDTH / FINE_STEP), round(REFINE_HALF_WIDTH / FINE_STEP) + 1)
    axis = np.round(center + offsets * FINE_STEP, 12)
    return axis[(axis >= 0.0) & (axis <= 1.0)]


def _search_gad(chi: np.ndarray) -> Tuple[np.ndarray, float]:
    coarse, stack = _cached_candidates(ChannelFamily.GAD, COARSE_STEP)
    scores = fidelity_many(chi, stack)
    eta0, gamma0 = coarse[int(np.argmax(scores))]
    eta, gamma = np.meshgrid(_refine_axis(eta0), _refine_axis(gamma0), indexing="ij")
    fine = np.column_stack([eta.ravel(), gamma.ravel()])
    fine_scores = fidelity_many(chi, _candidate_stack(ChannelFamily.GAD, fine))
    best = int(np.argmax(fine_scores))
    return fine[best], float(fine_scores[best])


def search(chi, family) -> Tuple[np.ndarray, float]:
    """Best parameters and their fidelity"""
    family = ChannelFamily.parse(family)
    mat = chi.chi if isinstance(chi, ProcessMatrix) else np.asarray(chi, dtype=complex)
    expected = 4 ** family.n_qubits
    if mat.shape != (expected, expected):
        raise DimensionError(f"{family.value} search needs a {expected}x{expected} chi, got {mat.shape}")

    if family is ChannelFamily.GAD:
        return _search_gad(mat)
    params, candidates = _cached_candidates(family, FINE_STEP)
    if family is ChannelFamily.CP:
        validate_density_matrix(mat, name="chi")
        scores = _pure_fidelities(mat, candidates)
    else:
        scores = fidelity_many(mat, candidates)
    best = int(np.argmax(scores))
    return params[best], float(scores[best])


def mf_estimate(
    chi,
    family,
    truth: Optional[Sequence[float]] = None,
    k_factor: Optional[float] = None,
    seed: Optional[int] = None,
) -> EstimationResult:
    """
    Maximum-fidelity estimate of the channel parameters

    Args:
        chi: measured ProcessMatrix (or array)
        family: DC, GAD or CP, fixes the search space
        truth: true parameters, when known, for the residues

    Returns:
        EstimationResult tagged MF
    """
    start = time.perf_counter()
    params, _ = search(chi, family)
    return EstimationResult(
        family, EstimatorKind.MF, tuple(params), truth,
        wall_time=time.perf_counter() - start, k_factor=k_factor, seed=seed,
    )
