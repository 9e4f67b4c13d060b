"""
Estimation results, residues and parameter scaling
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from quantum.channels import TWO_PI, ChannelFamily
from utils.exceptions import ConfigError, DimensionError


class EstimatorKind(Enum):
    """The three parameter-extraction strategies"""
    MF = "MF"
    FF = "FF"
    ANN_FF = "ANN_FF"

    @classmethod
    def parse(cls, value) -> "EstimatorKind":
        if isinstance(value, EstimatorKind):
            return value
        key = str(value).upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"Unknown estimator: {value} (expected mf, ff or ann-ff)")

    @property
    def needs_autoencoder(self) -> bool:
        return self is EstimatorKind.ANN_FF

    @property
    def needs_network(self) -> bool:
        return self is not EstimatorKind.MF


def _box(family: ChannelFamily) -> np.ndarray:
    return np.array(family.parameter_box, dtype=np.float64)


def clamp_to_box(family, values) -> np.ndarray:
    """Clip estimates into the family's closed parameter box"""
    family = ChannelFamily.parse(family)
    box = _box(family)
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != len(box):
        raise DimensionError(f"{family.value} has {len(box)} parameter(s), got {values.shape[-1]}")
    return np.clip(values, box[:, 0], box[:, 1])


def normalize_params(family, values) -> np.ndarray:
    """Map parameters into [0, 1] by the family box (CP: phi / 2pi)"""
    family = ChannelFamily.parse(family)
    box = _box(family)
    values = np.asarray(values, dtype=np.float64)
    return (values - box[:, 0]) / (box[:, 1] - box[:, 0])


def denormalize_params(family, scaled) -> np.ndarray:
    """Inverse of normalize_params, clamped to the box"""
    family = ChannelFamily.parse(family)
    box = _box(family)
    scaled = np.clip(np.asarray(scaled, dtype=np.float64), 0.0, 1.0)
    return box[:, 0] + scaled * (box[:, 1] - box[:, 0])


def parameter_residues(family, estimate, truth) -> np.ndarray:
    """
    |estimate - truth| per parameter

    The CP phase is compared on the circle: min(|d|, 2pi - |d|).
    """
    family = ChannelFamily.parse(family)
    diff = np.abs(np.asarray(estimate, dtype=np.float64) - np.asarray(truth, dtype=np.float64))
    if family is ChannelFamily.CP:
        diff = np.mod(diff, TWO_PI)
        diff = np.minimum(diff, TWO_PI - diff)
    return diff


def cp_relative_residue(estimate: float, truth: float) -> float:
    """Wrapped CP residue divided by the true phase; NaN at phi = 0"""
    if truth <= 0:
        return math.nan
    return float(parameter_residues(ChannelFamily.CP, [estimate], [truth])[0] / truth)


@dataclass
class EstimationResult:
    """One parameter estimate, with residues when the truth is known"""
    family: ChannelFamily
    method: EstimatorKind
    estimates: Tuple[float, ...]
    truth: Optional[Tuple[float, ...]] = None
    wall_time: float = 0.0
    k_factor: Optional[float] = None
    seed: Optional[int] = None
    residues: Optional[Tuple[float, ...]] = field(default=None, init=False)
    relative_residue: Optional[float] = field(default=None, init=False)

    def __post_init__(self):
        self.family = ChannelFamily.parse(self.family)
        self.method = EstimatorKind.parse(self.method)
        self.estimates = tuple(float(v) for v in clamp_to_box(self.family, self.estimates))
        if self.truth is not None:
            self.truth = tuple(float(v) for v in self.truth)
            self.residues = tuple(float(r) for r in parameter_residues(self.family, self.estimates, self.truth))
            if self.family is ChannelFamily.CP:
                self.relative_residue = cp_relative_residue(self.estimates[0], self.truth[0])

    def as_row(self) -> dict:
        row = {
            "family": self.family.value,
            "method": self.method.value,
            "k_factor": self.k_factor,
            "seed": self.seed,
        }
        names = self.family.parameter_names
        for i, name in enumerate(names):
            row[f"true_{name}"] = self.truth[i] if self.truth is not None else math.nan
            row[f"est_{name}"] = self.estimates[i]
            row[f"residue_{name}"] = self.residues[i] if self.residues is not None else math.nan
        if self.family is ChannelFamily.CP:
            row["relative_residue_phi"] = self.relative_residue if self.relative_residue is not None else math.nan
        row["wall_time"] = self.wall_time
        return row


def results_to_frame(results: Iterable[EstimationResult]) -> pd.DataFrame:
    """One CSV-ready row per estimate"""
    rows = [r.as_row() for r in results]
    return pd.DataFrame(rows)


def estimates_array(results: Sequence[EstimationResult]) -> np.ndarray:
    return np.array([r.estimates for r in results], dtype=np.float64)


def residues_array(results: Sequence[EstimationResult]) -> np.ndarray:
    """(N, n_params) residues; every result must carry its truth"""
    if any(r.residues is None for r in results):
        raise DimensionError("Residues need the true parameters of every record")
    return np.array([r.residues for r in results], dtype=np.float64)


def with_truth(results: List[EstimationResult], truths) -> List[EstimationResult]:
    """Copies of results with ground truth attached"""
    return [
        EstimationResult(r.family, r.method, r.estimates, tuple(t), r.wall_time, r.k_factor, r.seed)
        for r, t in zip(results, truths)
    ]
