"""
Exception hierarchy shared by every package

Each class carries the exit code that main.py returns for it:
    2 - configuration error
    3 - data error
    4 - training failure
"""

from typing import Optional


class QTomoError(Exception):
    """Base class for all benchmark errors"""
    exit_code = 1


# ============================================================================
# Configuration
# ============================================================================

class ConfigError(QTomoError):
    """Invalid configuration, grid or CLI value"""
    exit_code = 2


class UnsupportedQubitCountError(ConfigError):
    """Only 1- and 2-qubit channels are supported"""

    def __init__(self, n_qubits):
        super().__init__(f"Unsupported qubit count: {n_qubits} (expected 1 or 2)")
        self.n_qubits = n_qubits


# ============================================================================
# Data
# ============================================================================

class DataError(QTomoError):
    """Invalid input data, files or artifacts"""
    exit_code = 3


class DimensionError(DataError):
    """Matrix or vector dimension does not match what the operation needs"""


class InvalidStateError(DataError):
    """Matrix is not a valid density / process matrix"""


class ReconstructionError(DataError):
    """Tomographic reconstruction could not be carried out"""


class DatasetFormatError(DataError):
    """Dataset file is malformed or truncated"""

    def __init__(self, message: str, record_index: Optional[int] = None):
        if record_index is not None:
            message = f"{message} (record {record_index})"
        super().__init__(message)
        self.record_index = record_index


class ChecksumError(DatasetFormatError):
    """Stored checksum does not match the record content"""


class StratificationError(DataError):
    """A grid point has too few instances to stratify"""


class ModelFormatError(DataError):
    """Model file is malformed or truncated"""


class ModelVersionError(ModelFormatError):
    """Model file version is not supported"""


class EstimatorMismatchError(DataError):
    """Model family / input convention does not match the request"""


class MissingArtifactError(DataError):
    """A dataset, model or summary expected in the run directory is missing"""


# ============================================================================
# Training
# ============================================================================

class TrainingError(QTomoError):
    """Neural-network training or evaluation failure"""
    exit_code = 4


class ShapeError(TrainingError):
    """Tensor shapes do not compose"""


class NonFiniteTensorError(TrainingError):
    """NaN or Inf reached a layer boundary"""


class BatchSizeError(TrainingError):
    """Batch normalization in training mode needs at least two samples"""


class TrainingDivergedError(TrainingError):
    """Loss became NaN/Inf"""

    def __init__(self, epoch: int, message: str = "Training loss is not finite"):
        super().__init__(f"{message} at epoch {epoch}")
        self.epoch = epoch
