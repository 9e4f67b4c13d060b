"""
Network inputs derived from process matrices

DC heads see only the four diagonal terms of chi. GAD and CP heads see the
flattened two-channel image. DC training inputs can be enlarged by permuting
the three five-element blocks of the flattened chi.
"""

from itertools import permutations
from typing import List, Sequence, Tuple

import numpy as np

from quantum.channels import ChannelFamily
from quantum.process import ProcessMatrix
from utils.exceptions import DimensionError

# block orders other than the identity (0, 1, 2)
DC_BLOCK_ORDERS: Tuple[Tuple[int, int, int], ...] = tuple(p for p in permutations(range(3)) if p != (0, 1, 2))
_BLOCKS = (slice(1, 6), slice(6, 11), slice(11, 16))


def _single_qubit_chi(chi) -> np.ndarray:
    mat = chi.chi if isinstance(chi, ProcessMatrix) else np.asarray(chi)
    if mat.shape != (4, 4):
        raise DimensionError(f"Expected a 4x4 single-qubit chi, got {mat.shape}")
    return mat


def dc_diagonal_features(chi) -> np.ndarray:
    """Real parts of the chi diagonal, in basis order"""
    return np.real(np.diag(_single_qubit_chi(chi))).astype(np.float64)


def permute_dc_blocks(chi, order: Sequence[int]) -> ProcessMatrix:
    """
    Rearrange the flattened chi as 1 + 5 + 5 + 5 with the blocks in `order`

    The first element (the 1 - p term) stays in place.
    """
    order = tuple(int(i) for i in order)
    if sorted(order) != [0, 1, 2]:
        raise DimensionError(f"Block order must be a permutation of (0, 1, 2), got {order}")
    flat = _single_qubit_chi(chi).reshape(-1)
    blocks = [flat[s] for s in _BLOCKS]
    out = np.concatenate([flat[:1]] + [blocks[i] for i in order])
    return ProcessMatrix(1, out.reshape(4, 4))


def inverse_order(order: Sequence[int]) -> Tuple[int, ...]:
    inverse = [0, 0, 0]
    for position, block in enumerate(order):
        inverse[block] = position
    return tuple(inverse)


def augment_dc(chi) -> List[ProcessMatrix]:
    """The five non-identity block rearrangements of a DC chi"""
    return [permute_dc_blocks(chi, order) for order in DC_BLOCK_ORDERS]


def restore_dc_layout(images: np.ndarray, views: Sequence[int]) -> np.ndarray:
    """
    Undo the block rearrangement of each (2, 4, 4) image

    views[i] indexes DC_BLOCK_ORDERS; a negative view marks an un-permuted image.
    """
    out = np.array(images, dtype=np.float64, copy=True)
    if len(out) != len(views):
        raise DimensionError(f"{len(out)} images but {len(views)} view indices")
    for i, view in enumerate(views):
        if view >= 0:
            restored = permute_dc_blocks(ProcessMatrix.from_image(out[i]), inverse_order(DC_BLOCK_ORDERS[view]))
            out[i] = restored.to_image()
    return out


# ============================================================================
# Batched conversions
# ============================================================================

def chi_images(chis: Sequence) -> np.ndarray:
    """(N, 2, d, d) real/imag images"""
    return np.stack([c.to_image() for c in chis])


def feature_count(family) -> int:
    family = ChannelFamily.parse(family)
    if family is ChannelFamily.DC:
        return 4
    dim = 4 ** family.n_qubits
    return 2 * dim * dim


def head_inputs(images: np.ndarray, family) -> np.ndarray:
    """
    Feed-forward inputs from a stack of chi images

    Args:
        images: (N, 2, d, d) noisy or denoised images
        family: channel family of the head

    Returns:
        (N, F) matrix; F = 4 for DC, 2 * d * d otherwise
    """
    family = ChannelFamily.parse(family)
    images = np.asarray(images, dtype=np.float64)
    dim = 4 ** family.n_qubits
    if images.ndim != 4 or images.shape[1:] != (2, dim, dim):
        raise DimensionError(f"{family.value} expects (N, 2, {dim}, {dim}) images, got {images.shape}")
    if family is ChannelFamily.DC:
        return np.diagonal(images[:, 0], axis1=1, axis2=2).copy()
    return images.reshape(len(images), -1)
