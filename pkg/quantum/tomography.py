"""
Simulated ancilla-assisted process tomography

Full local-Pauli state tomography of the Choi state: every qubit of the
2*n_qubits register is measured in X, Y or Z. Counts are independent Poisson
draws with per-setting mean k * n_base; reconstruction maximizes the Poisson
log-likelihood over rho = T^dagger T / Tr(T^dagger T).
"""

import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache, reduce
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from config.settings import (
    LOG_FLOOR,
    MLE_GRADIENT_TOL,
    MLE_INIT_MIXING,
    MLE_MAX_ITERATIONS,
    MLE_RELATIVE_TOL,
    N_BASE,
    PSD_TOL,
)
from quantum.channels import ChannelSpec
from quantum.linalg import as_square, hermitize, project_to_physical, validate_density_matrix
from quantum.process import (
    ProcessMatrix,
    _check_qubits,
    _pauli_strings,
    analytic_chi,
    chi_from_choi,
    choi_state,
)
from utils.exceptions import ConfigError, DataError, DimensionError, ReconstructionError

logger = logging.getLogger(__name__)

BASIS_LABELS = "XYZ"
_SQ2 = 1 / np.sqrt(2)

# Outcome bit 0 is the +1 eigenvector
_EIGENKETS = {
    "X": (np.array([_SQ2, _SQ2], dtype=complex), np.array([_SQ2, -_SQ2], dtype=complex)),
    "Y": (np.array([_SQ2, 1j * _SQ2], dtype=complex), np.array([_SQ2, -1j * _SQ2], dtype=complex)),
    "Z": (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)),
}


@dataclass(frozen=True)
class MeasurementSetting:
    """Local measurement basis per qubit of the Choi register"""
    bases: Tuple[str, ...]

    def __post_init__(self):
        bases = tuple(str(b).upper() for b in self.bases)
        if not bases or any(b not in BASIS_LABELS for b in bases):
            raise ConfigError(f"Invalid measurement setting: {self.bases}")
        object.__setattr__(self, "bases", bases)

    @property
    def n_parties(self) -> int:
        return len(self.bases)

    @property
    def label(self) -> str:
        return "".join(self.bases)

    @property
    def n_outcomes(self) -> int:
        return 2 ** self.n_parties

    def kets(self) -> np.ndarray:
        """Outcome kets (n_outcomes, 2**n_parties); outcome bits read qubit 0 first"""
        rows = []
        for bits in itertools.product((0, 1), repeat=self.n_parties):
            rows.append(reduce(np.kron, (_EIGENKETS[b][bit] for b, bit in zip(self.bases, bits))))
        return np.array(rows)

    def projectors(self) -> np.ndarray:
        kets = self.kets()
        return np.einsum("od,oe->ode", kets, kets.conj())


def enumerate_settings(n_qubits: int) -> List[MeasurementSetting]:
    """All 3**(2*n_qubits) local Pauli settings on the Choi register"""
    _check_qubits(n_qubits)
    return [MeasurementSetting(combo) for combo in itertools.product(BASIS_LABELS, repeat=2 * n_qubits)]


@lru_cache(maxsize=None)
def _measurement_kets(n_qubits: int) -> np.ndarray:
    kets = np.array([s.kets() for s in enumerate_settings(n_qubits)])
    kets.setflags(write=False)
    return kets


def measurement_projectors(n_qubits: int) -> np.ndarray:
    """Projector stack of shape (settings, outcomes, D, D) with D = 4**n_qubits"""
    kets = _measurement_kets(n_qubits)
    return np.einsum("sod,soe->sode", kets, kets.conj())


def _probabilities_from_kets(rho: np.ndarray, kets: np.ndarray) -> np.ndarray:
    return np.einsum("...d,de,...e->...", kets.conj(), rho, kets).real


def outcome_probabilities(rho, setting: MeasurementSetting) -> np.ndarray:
    """Born-rule probabilities Tr(rho Pi_o) for every outcome of one setting"""
    arr = as_square(rho)
    if arr.shape[0] != 2 ** setting.n_parties:
        raise DimensionError(
            f"Setting {setting.label} acts on dimension {2 ** setting.n_parties}, got {arr.shape[0]}"
        )
    validate_density_matrix(arr)
    return np.clip(_probabilities_from_kets(arr, setting.kets()), 0.0, None)


def all_outcome_probabilities(rho, n_qubits: int) -> np.ndarray:
    """Probability table of shape (settings, outcomes)"""
    arr = as_square(rho)
    if arr.shape[0] != 4 ** n_qubits:
        raise DimensionError(f"Choi state of {n_qubits} qubit(s) must have dimension {4 ** n_qubits}")
    validate_density_matrix(arr)
    return np.clip(_probabilities_from_kets(arr, _measurement_kets(n_qubits)), 0.0, None)


def _rng(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def sample_counts(probs, mean_n: float, rng_seed=None) -> np.ndarray:
    """
    Independent Poisson(mean_n * prob) count per outcome

    Args:
        probs: probability vector (or table, any shape)
        mean_n: mean number of events
        rng_seed: int, SeedSequence or Generator

    Returns:
        Integer counts with the shape of probs
    """
    probs = np.asarray(probs, dtype=np.float64)
    if not mean_n > 0:
        raise ConfigError(f"mean_n must be > 0, got {mean_n}")
    if np.any(probs < -PSD_TOL) or not np.all(np.isfinite(probs)):
        raise DataError("Probabilities must be finite and non-negative")
    return _rng(rng_seed).poisson(mean_n * np.clip(probs, 0.0, None))


@dataclass
class CountsTable:
    """Outcome counts for every setting plus the signal-level metadata"""
    n_qubits: int
    counts: np.ndarray
    mean_counts: np.ndarray
    k_factor: float
    n_base: float
    seed: Optional[int] = None

    def __post_init__(self):
        _check_qubits(self.n_qubits)
        self.counts = np.asarray(self.counts, dtype=np.float64)
        n_settings = 3 ** (2 * self.n_qubits)
        expected = (n_settings, 4 ** self.n_qubits)
        if self.counts.shape != expected:
            raise DimensionError(f"Counts table must have shape {expected}, got {self.counts.shape}")
        if np.any(self.counts < 0) or not np.all(np.isfinite(self.counts)):
            raise DataError("Counts must be finite and non-negative")
        self.mean_counts = np.broadcast_to(
            np.asarray(self.mean_counts, dtype=np.float64), (n_settings,)
        ).copy()

    @property
    def n_settings(self) -> int:
        return self.counts.shape[0]

    @property
    def total_counts(self) -> float:
        return float(self.counts.sum())


def expected_counts(rho, n_qubits: int, mean_n: float, n_base: float = N_BASE) -> CountsTable:
    """Noiseless counts mean_n * p (infinite-statistics oracle input)"""
    if not mean_n > 0:
        raise ConfigError(f"mean_n must be > 0, got {mean_n}")
    probs = all_outcome_probabilities(rho, n_qubits)
    return CountsTable(n_qubits, mean_n * probs, mean_n, mean_n / n_base, n_base)


def simulate_counts(spec: ChannelSpec, k_factor: float, n_base: float = N_BASE, rng_seed=None) -> CountsTable:
    """Poisson counts of the channel's Choi state with per-setting mean k_factor * n_base"""
    if not k_factor > 0 or not n_base > 0:
        raise ConfigError(f"k_factor and n_base must be > 0, got {k_factor}, {n_base}")
    mean_n = k_factor * n_base
    probs = all_outcome_probabilities(choi_state(spec), spec.n_qubits)
    counts = sample_counts(probs, mean_n, rng_seed)
    seed = int(rng_seed) if isinstance(rng_seed, (int, np.integer)) else None
    return CountsTable(spec.n_qubits, counts, mean_n, k_factor, n_base, seed)


def _expected_means(rho: np.ndarray, counts: CountsTable) -> np.ndarray:
    probs = _probabilities_from_kets(rho, _measurement_kets(counts.n_qubits))
    return np.maximum(counts.mean_counts[:, None] * probs, LOG_FLOOR)


def _log_likelihood_terms(mu: np.ndarray, c: np.ndarray) -> float:
    # zero counts contribute -mu only
    log_term = np.where(c > 0, c * np.log(mu), 0.0)
    return float(np.sum(log_term - mu))


def log_likelihood(rho, counts: CountsTable) -> float:
    """Poisson log-likelihood sum(c log mu - mu), constant terms dropped"""
    arr = as_square(rho)
    if arr.shape[0] != 4 ** counts.n_qubits:
        raise DimensionError(f"rho of dimension {arr.shape[0]} does not match the counts table")
    return _log_likelihood_terms(_expected_means(arr, counts), counts.counts)


# ============================================================================
# Linear inversion
# ============================================================================

@lru_cache(maxsize=None)
def _inversion_tables(n_qubits: int):
    """Compatibility mask (P, S) and outcome signs (P, O) for every Pauli string"""
    parties = 2 * n_qubits
    pauli_digits = list(itertools.product(range(4), repeat=parties))
    setting_digits = list(itertools.product((1, 2, 3), repeat=parties))
    outcome_bits = list(itertools.product((0, 1), repeat=parties))

    compatible = np.array([
        [all(p == 0 or p == s for p, s in zip(pd, sd)) for sd in setting_digits]
        for pd in pauli_digits
    ], dtype=np.float64)
    signs = np.array([
        [np.prod([(-1) ** b for p, b in zip(pd, bits) if p != 0]) for bits in outcome_bits]
        for pd in pauli_digits
    ], dtype=np.float64)
    return compatible, signs


def linear_inversion(counts: CountsTable) -> np.ndarray:
    """
    Pauli-expansion estimate of the Choi state, projected to a physical state

    Each Pauli expectation is averaged over all settings compatible with it,
    using frequencies normalized per setting.

    Raises:
        ReconstructionError: every count is zero
    """
    if counts.total_counts <= 0:
        raise ReconstructionError("Cannot invert an all-zero counts table")
    compatible, signs = _inversion_tables(counts.n_qubits)
    totals = counts.counts.sum(axis=1)
    observed = totals > 0
    freqs = np.zeros_like(counts.counts)
    freqs[observed] = counts.counts[observed] / totals[observed, None]

    per_setting = signs @ freqs.T
    weight = compatible * observed[None, :]
    n_used = weight.sum(axis=1)
    expectations = np.divide(
        (weight * per_setting).sum(axis=1), n_used, out=np.zeros(len(n_used)), where=n_used > 0
    )
    expectations[0] = 1.0

    paulis = _pauli_strings(2 * counts.n_qubits)
    dim = paulis.shape[1]
    rho = np.tensordot(expectations, paulis, axes=1) / dim
    return project_to_physical(hermitize(rho))


# ============================================================================
# Maximum likelihood
# ============================================================================

@dataclass
class ReconstructionResult:
    """Outcome of mle_reconstruct"""
    chi: ProcessMatrix
    log_likelihood: float
    iterations: int
    converged: bool
    choi: np.ndarray = field(repr=False, default=None)
    history: Tuple[float, ...] = field(repr=False, default=())


class _CholeskyParametrization:
    """Maps a real vector to lower-triangular T with real diagonal"""

    def __init__(self, dim: int):
        self.dim = dim
        self.rows, self.cols = np.tril_indices(dim, -1)
        self.n_off = len(self.rows)
        self.size = dim + 2 * self.n_off

    def to_matrix(self, x: np.ndarray) -> np.ndarray:
        d, m = self.dim, self.n_off
        t = np.zeros((d, d), dtype=complex)
        t[np.diag_indices(d)] = x[:d]
        t[self.rows, self.cols] = x[d:d + m] + 1j * x[d + m:]
        return t

    def to_vector(self, t: np.ndarray) -> np.ndarray:
        off = t[self.rows, self.cols]
        return np.concatenate([np.real(np.diag(t)), off.real, off.imag])

    def gradient(self, th: np.ndarray) -> np.ndarray:
        """Real gradient given the complex matrix T @ H"""
        off = th[self.rows, self.cols]
        return 2.0 * np.concatenate([np.real(np.diag(th)), off.real, off.imag])


def _initial_factor(rho: np.ndarray) -> np.ndarray:
    """T with T^dagger T = rho, T lower-triangular"""
    dim = rho.shape[0]
    flip = np.eye(dim)[::-1]
    try:
        lower = np.linalg.cholesky(flip @ rho @ flip)
    except np.linalg.LinAlgError:
        logger.debug("Cholesky of the start state failed; starting from the maximally mixed state")
        return np.eye(dim, dtype=complex) / np.sqrt(dim)
    return flip @ lower.conj().T @ flip


def _starting_state(counts: CountsTable, initial_state) -> np.ndarray:
    dim = 4 ** counts.n_qubits
    if initial_state is not None:
        start = project_to_physical(initial_state)
        if start.shape[0] != dim:
            raise DimensionError(f"Initial state of dimension {start.shape[0]} does not match {dim}")
    else:
        start = linear_inversion(counts)
    return (1 - MLE_INIT_MIXING) * start + MLE_INIT_MIXING * np.eye(dim) / dim


def mle_reconstruct(
    counts: CountsTable,
    n_qubits: Optional[int] = None,
    initial_state=None,
    max_iterations: int = MLE_MAX_ITERATIONS,
) -> ReconstructionResult:
    """
    Maximum-likelihood Choi state, returned as a process matrix

    Args:
        counts: observed counts for the complete setting set
        n_qubits: channel size; defaults to counts.n_qubits
        initial_state: optional start density matrix (linear inversion otherwise)
        max_iterations: optimizer iteration cap

    Returns:
        ReconstructionResult; converged is False when the iteration cap was hit, or when the
        line search stalled with a gradient entry of at least sqrt(MLE_GRADIENT_TOL)

    Raises:
        ReconstructionError: all counts are zero
    """
    if n_qubits is not None and n_qubits != counts.n_qubits:
        raise DimensionError(f"Counts table is for {counts.n_qubits} qubit(s), not {n_qubits}")
    if counts.total_counts <= 0:
        raise ReconstructionError("All counts are zero; nothing to reconstruct")

    kets = _measurement_kets(counts.n_qubits)
    dim = kets.shape[-1]
    param = _CholeskyParametrization(dim)
    c = counts.counts
    weights = counts.mean_counts[:, None]
    scale = counts.total_counts
    identity = np.eye(dim)

    def state(x):
        t = param.to_matrix(x)
        gram = t.conj().T @ t
        trace = float(np.real(np.trace(gram)))
        return t, gram / trace, trace

    def objective(x):
        t, rho, trace = state(x)
        mu = np.maximum(weights * _probabilities_from_kets(rho, kets), LOG_FLOOR)
        value = -_log_likelihood_terms(mu, c)
        w = (c / mu - 1.0) * weights
        g = np.einsum("so,sod,soe->de", w, kets, kets.conj())
        h = (g - np.real(np.trace(g @ rho)) * identity) / trace
        return value / scale, -param.gradient(t @ h) / scale

    x0 = param.to_vector(_initial_factor(_starting_state(counts, initial_state)))
    history = []

    def record(xk):
        history.append(-objective(xk)[0] * scale)

    result = minimize(
        objective,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=record,
        options={"maxiter": max_iterations, "gtol": MLE_GRADIENT_TOL, "ftol": MLE_RELATIVE_TOL},
    )

    converged = bool(result.success)
    if not converged and result.status == 2:
        # line search stalled at machine precision
        converged = float(np.max(np.abs(result.jac))) < np.sqrt(MLE_GRADIENT_TOL)
    if not converged:
        logger.warning(f"MLE stopped without converging after {result.nit} iterations: {result.message}")

    _, rho, _ = state(result.x)
    rho = hermitize(rho)
    rho /= np.real(np.trace(rho))
    chi = chi_from_choi(rho, counts.n_qubits)
    chi.chi = hermitize(chi.chi)

    return ReconstructionResult(
        chi=chi,
        log_likelihood=-float(result.fun) * scale,
        iterations=int(result.nit),
        converged=converged,
        choi=rho,
        history=tuple(history),
    )


def simulate_noisy_chi(
    spec: ChannelSpec,
    k_factor: float,
    n_base: float = N_BASE,
    rng_seed=None,
) -> Tuple[ProcessMatrix, ProcessMatrix]:
    """
    Simulated tomography of one channel instance

    Returns:
        (noisy chi from MLE on Poisson counts, analytic ideal chi)

    Raises:
        ReconstructionError: no counts, or the MLE did not converge
    """
    counts = simulate_counts(spec, k_factor, n_base, rng_seed)
    result = mle_reconstruct(counts)
    if not result.converged:
        raise ReconstructionError(f"MLE did not converge after {result.iterations} iterations")
    return result.chi, analytic_chi(spec)
