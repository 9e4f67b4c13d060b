"""
Dense complex linear algebra helpers

Matrices are numpy complex128 arrays (pairs of float64). Predicates use the
tolerances from config.settings.
"""

import numpy as np

from config.settings import HERMITIAN_TOL, PSD_TOL, TRACE_TOL
from utils.exceptions import DimensionError, InvalidStateError


def as_square(matrix) -> np.ndarray:
    """Return matrix as a complex square array or raise DimensionError"""
    arr = np.asarray(matrix, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise DimensionError(f"Expected a non-empty square matrix, got shape {arr.shape}")
    return arr


def dagger(matrix: np.ndarray) -> np.ndarray:
    return np.conjugate(np.swapaxes(matrix, -1, -2))


def hermitize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + dagger(matrix))


def is_hermitian(matrix, tol: float = HERMITIAN_TOL) -> bool:
    arr = as_square(matrix)
    return bool(np.max(np.abs(arr - dagger(arr))) <= tol)


def is_unitary(matrix, tol: float = HERMITIAN_TOL) -> bool:
    arr = as_square(matrix)
    return bool(np.max(np.abs(arr @ dagger(arr) - np.eye(arr.shape[0]))) <= tol)


def min_eigenvalue(matrix) -> float:
    return float(np.linalg.eigvalsh(hermitize(as_square(matrix)))[0])


def is_psd(matrix, tol: float = PSD_TOL) -> bool:
    arr = as_square(matrix)
    return is_hermitian(arr) and min_eigenvalue(arr) >= -tol


def is_density_matrix(matrix, tol: float = PSD_TOL) -> bool:
    arr = as_square(matrix)
    return is_psd(arr, tol) and abs(np.trace(arr) - 1.0) <= TRACE_TOL


def validate_density_matrix(matrix, name: str = "rho") -> np.ndarray:
    """Check Hermiticity, PSD and unit trace; return the array"""
    arr = as_square(matrix)
    if not is_hermitian(arr):
        raise InvalidStateError(f"{name} is not Hermitian")
    lam = min_eigenvalue(arr)
    if lam < -PSD_TOL:
        raise InvalidStateError(f"{name} has negative eigenvalue {lam:.3e}")
    trace = np.trace(arr)
    if abs(trace - 1.0) > TRACE_TOL:
        raise InvalidStateError(f"{name} has trace {trace.real:.12f}, expected 1")
    return arr


def clipped_eigh(matrix: np.ndarray):
    """
    Hermitian eigendecomposition with rounding-level negatives clipped to zero

    Raises:
        InvalidStateError: an eigenvalue is below -PSD_TOL
    """
    lam, vecs = np.linalg.eigh(hermitize(matrix))
    if lam.min() < -PSD_TOL:
        raise InvalidStateError(f"Matrix is not PSD (min eigenvalue {lam.min():.3e})")
    return np.maximum(lam, 0.0), vecs


def hermitian_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Principal square root of a PSD matrix via eigendecomposition"""
    lam, vecs = clipped_eigh(matrix)
    return (vecs * np.sqrt(lam)[..., None, :]) @ dagger(vecs)


def project_to_physical(matrix) -> np.ndarray:
    """
    Nearest valid density matrix: Hermitize, clip negative eigenvalues, renormalize

    Falls back to the maximally mixed state if nothing positive survives.
    """
    arr = as_square(matrix)
    lam, vecs = np.linalg.eigh(hermitize(arr))
    lam = np.maximum(lam, 0.0)
    total = lam.sum()
    if total <= 0:
        return np.eye(arr.shape[0], dtype=complex) / arr.shape[0]
    lam /= total
    return (vecs * lam) @ dagger(vecs)


def partial_trace(rho, dims, keep) -> np.ndarray:
    """
    Partial trace of a multipartite density matrix

    Args:
        rho: density matrix on the tensor product of `dims`
        dims: subsystem dimensions, e.g. (2, 2)
        keep: indices of subsystems to keep

    Returns:
        Reduced density matrix
    """
    arr = as_square(rho)
    dims = list(dims)
    n = len(dims)
    if int(np.prod(dims)) != arr.shape[0]:
        raise DimensionError(f"dims {dims} do not match matrix of size {arr.shape[0]}")
    keep = sorted(keep)
    traced = [i for i in range(n) if i not in keep]
    tensor = arr.reshape(dims + dims)
    for offset, idx in enumerate(traced):
        axis = idx - offset
        tensor = np.trace(tensor, axis1=axis, axis2=axis + tensor.ndim // 2)
    kept_dim = int(np.prod([dims[i] for i in keep])) if keep else 1
    return tensor.reshape(kept_dim, kept_dim)


def purity(rho) -> float:
    arr = as_square(rho)
    return float(np.real(np.trace(arr @ arr)))
