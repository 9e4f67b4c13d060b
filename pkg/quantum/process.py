"""
Channel action, Choi states, process matrices and fidelity

The process matrix chi is the Choi state written in the Bell/Pauli basis
|e_i> = (P_i (x) 1)|Phi+>, with P_i running over pauli_basis(n) in
lexicographic order (identity first).
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import List, Sequence

import numpy as np

from config.settings import PSD_TOL, TRACE_TOL
from quantum.channels import (
    ChannelFamily,
    ChannelSpec,
    controlled_phase_unitary,
    gad_kraus_operators,
)
from quantum.linalg import (
    as_square,
    clipped_eigh,
    dagger,
    hermitian_sqrt,
    is_hermitian,
    min_eigenvalue,
    validate_density_matrix,
)
from utils.exceptions import DimensionError, InvalidStateError, UnsupportedQubitCountError

SINGLE_QUBIT_PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

FIDELITY_TOL = 1e-6


def _check_qubits(n_qubits: int) -> int:
    if n_qubits not in (1, 2):
        raise UnsupportedQubitCountError(n_qubits)
    return n_qubits


@lru_cache(maxsize=None)
def _pauli_strings(num_qubits: int) -> np.ndarray:
    """All 4**num_qubits Pauli tensor products, lexicographic order"""
    mats = [
        reduce(np.kron, combo)
        for combo in itertools.product(SINGLE_QUBIT_PAULIS, repeat=num_qubits)
    ]
    stack = np.array(mats)
    stack.setflags(write=False)
    return stack


def pauli_basis(n_qubits: int) -> List[np.ndarray]:
    """
    Ordered Pauli operator basis

    Args:
        n_qubits: 1 or 2

    Returns:
        [1, X, Y, Z] for one qubit; the 16 products 11, 1X, ..., ZZ for two
    """
    _check_qubits(n_qubits)
    return [m.copy() for m in _pauli_strings(n_qubits)]


def maximally_entangled_state(n_qubits: int) -> np.ndarray:
    """|Phi+><Phi+| on 2*n_qubits qubits, |Phi+> = sum_k |k>|k> / sqrt(d)"""
    _check_qubits(n_qubits)
    d = 2 ** n_qubits
    ket = np.eye(d, dtype=complex).reshape(d * d) / np.sqrt(d)
    return np.outer(ket, ket.conj())


def kraus_operators(spec: ChannelSpec) -> List[np.ndarray]:
    """Kraus decomposition of the channel"""
    if spec.family in (ChannelFamily.DC, ChannelFamily.PAULI):
        probs = spec.pauli_probabilities()
        return [np.sqrt(p) * s for p, s in zip(probs, SINGLE_QUBIT_PAULIS)]
    if spec.family is ChannelFamily.GAD:
        return gad_kraus_operators(*spec.params)
    return [controlled_phase_unitary(spec.params[0])]


def apply_channel(spec: ChannelSpec, rho) -> np.ndarray:
    """
    Apply the channel to a density matrix of the channel's dimension

    DC and Pauli use sum_i p_i s_i rho s_i, GAD the four Kraus operators,
    CP the conjugation U rho U^dagger.
    """
    arr = as_square(rho)
    if arr.shape[0] != spec.dim:
        raise DimensionError(
            f"{spec.family.value} acts on dimension {spec.dim}, got {arr.shape[0]}"
        )
    validate_density_matrix(arr)

    if spec.family in (ChannelFamily.DC, ChannelFamily.PAULI):
        probs = spec.pauli_probabilities()
        return sum(p * s @ arr @ s for p, s in zip(probs, SINGLE_QUBIT_PAULIS))
    if spec.family is ChannelFamily.CP:
        u = controlled_phase_unitary(spec.params[0])
        return u @ arr @ dagger(u)
    return sum(k @ arr @ dagger(k) for k in gad_kraus_operators(*spec.params))


def choi_state(spec: ChannelSpec) -> np.ndarray:
    """(Gamma (x) 1)[|Phi+><Phi+|], the channel acting on the first half"""
    phi = maximally_entangled_state(spec.n_qubits)
    identity = np.eye(spec.dim, dtype=complex)
    out = np.zeros_like(phi)
    for k in kraus_operators(spec):
        ext = np.kron(k, identity)
        out += ext @ phi @ dagger(ext)
    return out


@lru_cache(maxsize=None)
def _bell_pauli_basis(n_qubits: int) -> np.ndarray:
    d = 2 ** n_qubits
    phi_ket = np.eye(d, dtype=complex).reshape(d * d) / np.sqrt(d)
    identity = np.eye(d, dtype=complex)
    columns = [np.kron(p, identity) @ phi_ket for p in _pauli_strings(n_qubits)]
    basis = np.stack(columns, axis=1)
    basis.setflags(write=False)
    return basis


def bell_pauli_basis(n_qubits: int) -> np.ndarray:
    """Unitary whose columns are |e_i> = (P_i (x) 1)|Phi+>"""
    _check_qubits(n_qubits)
    return _bell_pauli_basis(n_qubits).copy()


@dataclass
class ProcessMatrix:
    """Hermitian, PSD, unit-trace chi in the Bell/Pauli basis"""
    n_qubits: int
    chi: np.ndarray

    def __post_init__(self):
        _check_qubits(self.n_qubits)
        self.chi = as_square(self.chi)
        if self.chi.shape[0] != 4 ** self.n_qubits:
            raise DimensionError(
                f"chi for {self.n_qubits} qubit(s) must be {4 ** self.n_qubits}x{4 ** self.n_qubits}, "
                f"got {self.chi.shape}"
            )

    @property
    def dim(self) -> int:
        return self.chi.shape[0]

    def validate(self) -> "ProcessMatrix":
        validate_density_matrix(self.chi, name="chi")
        return self

    def is_valid(self) -> bool:
        try:
            self.validate()
            return True
        except InvalidStateError:
            return False

    def to_image(self) -> np.ndarray:
        """Two-channel (real, imag) image of shape (2, dim, dim)"""
        return np.stack([self.chi.real, self.chi.imag]).astype(np.float64)

    @classmethod
    def from_image(cls, image: np.ndarray) -> "ProcessMatrix":
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 3 or image.shape[0] != 2:
            raise DimensionError(f"Expected a (2, d, d) image, got {image.shape}")
        dim = image.shape[1]
        n_qubits = {4: 1, 16: 2}.get(dim)
        if n_qubits is None:
            raise DimensionError(f"No process matrix of dimension {dim}")
        return cls(n_qubits, image[0] + 1j * image[1])


def _n_qubits_for_choi(dim: int) -> int:
    n = {4: 1, 16: 2}.get(dim)
    if n is None:
        raise DimensionError(f"No 1- or 2-qubit channel has a Choi state of dimension {dim}")
    return n


def chi_from_choi(rho, n_qubits: int = None) -> ProcessMatrix:
    """chi_ij = <e_i| rho |e_j>"""
    arr = validate_density_matrix(rho, name="Choi state")
    if n_qubits is None:
        n_qubits = _n_qubits_for_choi(arr.shape[0])
    _check_qubits(n_qubits)
    if arr.shape[0] != 4 ** n_qubits:
        raise DimensionError(f"Choi state of {n_qubits} qubit(s) must have dimension {4 ** n_qubits}")
    basis = _bell_pauli_basis(n_qubits)
    return ProcessMatrix(n_qubits, dagger(basis) @ arr @ basis)


def choi_from_chi(chi) -> np.ndarray:
    """Inverse of chi_from_choi"""
    if isinstance(chi, ProcessMatrix):
        n_qubits, mat = chi.n_qubits, chi.chi
    else:
        mat = as_square(chi)
        n_qubits = _n_qubits_for_choi(mat.shape[0])
    basis = _bell_pauli_basis(n_qubits)
    return basis @ mat @ dagger(basis)


def analytic_chi(spec: ChannelSpec) -> ProcessMatrix:
    """Ideal process matrix of a channel"""
    return chi_from_choi(choi_state(spec), spec.n_qubits)


def _chi_array(value) -> np.ndarray:
    return value.chi if isinstance(value, ProcessMatrix) else as_square(value)


def _check_fidelity_input(mat: np.ndarray, name: str):
    if not is_hermitian(mat):
        raise InvalidStateError(f"{name} is not Hermitian")
    lam = min_eigenvalue(mat)
    if lam < -PSD_TOL:
        raise InvalidStateError(f"{name} has negative eigenvalue {lam:.3e}")
    if abs(np.trace(mat) - 1.0) > TRACE_TOL:
        raise InvalidStateError(f"{name} is not unit-trace")


def _finish_fidelity(values: np.ndarray) -> np.ndarray:
    if np.any(values > 1 + FIDELITY_TOL) or np.any(values < -FIDELITY_TOL):
        raise InvalidStateError(f"Fidelity out of range: {values.max():.9f}")
    return np.clip(values, 0.0, 1.0)


def fidelity(a, b) -> float:
    """
    F = (Tr sqrt(sqrt(a) b sqrt(a)))^2

    Args:
        a, b: ProcessMatrix or arrays of equal dimension, unit-trace PSD

    Returns:
        Fidelity in [0, 1]
    """
    ma, mb = _chi_array(a), _chi_array(b)
    if ma.shape != mb.shape:
        raise DimensionError(f"Fidelity of mismatched shapes {ma.shape} and {mb.shape}")
    _check_fidelity_input(ma, "first argument")
    _check_fidelity_input(mb, "second argument")
    root = hermitian_sqrt(ma)
    lam, _ = clipped_eigh(root @ mb @ root)
    return float(_finish_fidelity(np.array([np.sqrt(lam).sum() ** 2]))[0])


def fidelity_many(a, candidates: Sequence) -> np.ndarray:
    """
    Fidelity of `a` against a stack of candidate matrices (shared sqrt(a))

    Candidates are trusted to be analytic process matrices; `a` is checked.
    """
    ma = _chi_array(a)
    _check_fidelity_input(ma, "reference")
    stack = np.asarray([_chi_array(c) for c in candidates]) if not isinstance(candidates, np.ndarray) \
        else np.asarray(candidates, dtype=complex)
    if stack.ndim != 3 or stack.shape[1:] != ma.shape:
        raise DimensionError(f"Candidate stack {stack.shape} does not match {ma.shape}")
    root = hermitian_sqrt(ma)
    inner = root[None] @ stack @ root[None]
    lam = np.linalg.eigvalsh(0.5 * (inner + dagger(inner)))
    if lam.min() < -PSD_TOL:
        raise InvalidStateError(f"Candidate produced negative eigenvalue {lam.min():.3e}")
    values = np.sqrt(np.maximum(lam, 0.0)).sum(axis=1) ** 2
    return _finish_fidelity(values)
