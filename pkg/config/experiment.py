"""
Experiment configuration models

ExperimentConfig mirrors the JSON file passed with --config. Every field has a
default drawn from config.settings, so an empty JSON object is a valid config.
"""

import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from config import settings
from utils.exceptions import ConfigError

FamilyName = Literal["DC", "GAD", "CP"]
MethodName = Literal["MF", "FF", "ANN_FF"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class DatasetSettings(_Section):
    """Training-corpus generation settings"""
    grid_step: Optional[float] = None
    instances_per_point: Optional[int] = Field(default=None, ge=2)
    k_factors: List[float] = Field(default_factory=lambda: list(settings.SIGNAL_LEVELS))
    n_base: float = Field(default=settings.N_BASE, gt=0)
    augment: Optional[bool] = None

    @field_validator("grid_step")
    @classmethod
    def _positive_step(cls, value):
        if value is not None and not value > 0:
            raise ValueError("grid_step must be > 0")
        return value

    @field_validator("k_factors")
    @classmethod
    def _positive_k(cls, value):
        if not value or any(not k > 0 for k in value):
            raise ValueError("k_factors must be a non-empty list of positive values")
        return value

    def augmentation_enabled(self, family: str) -> bool:
        """DC is augmented unless explicitly disabled; other families never are"""
        if family != "DC":
            return False
        return True if self.augment is None else self.augment


class TrainingHyperparameters(_Section):
    """Optimizer and schedule settings shared by both network stages"""
    epochs: int = Field(default=settings.MAX_EPOCHS, ge=1)
    batch_size: int = Field(default=settings.BATCH_SIZE, ge=2)
    learning_rate: float = Field(default=settings.LEARNING_RATE, gt=0)
    optimizer: Literal["adam", "sgd"] = "adam"
    patience: int = Field(default=settings.EARLY_STOP_PATIENCE, ge=1)
    split_ratio: float = Field(default=settings.SPLIT_RATIO, gt=0, lt=1)


class ArchitectureSettings(_Section):
    """Network shape overrides; None falls back to the per-family table"""
    encoder_channels: Tuple[int, int, int] = settings.ENCODER_CHANNELS
    kernel: Optional[int] = Field(default=None, ge=1)
    latent: Optional[int] = Field(default=None, ge=1)
    width_factor: Optional[int] = Field(default=None, ge=1)
    batchnorm_momentum: float = Field(default=settings.BATCHNORM_MOMENTUM, gt=0, le=1)
    batchnorm_epsilon: float = Field(default=settings.BATCHNORM_EPSILON, gt=0)

    def resolve(self, family: str) -> Dict[str, int]:
        table = dict(settings.ARCHITECTURE_TABLE[family])
        for key in ("kernel", "latent", "width_factor"):
            override = getattr(self, key)
            if override is not None:
                table[key] = override
        return table


class EvaluationThresholds(_Section):
    """Success-rate definitions and evaluation sample sizes"""
    residue_cutoff: float = Field(default=settings.RESIDUE_CUTOFF, gt=0, lt=1)
    success_thresholds: List[float] = Field(default_factory=lambda: list(settings.SUCCESS_THRESHOLDS))
    cp_absolute_cutoff: float = Field(default=settings.CP_ABSOLUTE_CUTOFF, gt=0, lt=math.pi)
    cp_relative_cutoff: float = Field(default=settings.CP_RELATIVE_CUTOFF, gt=0, lt=1)
    instances_per_point: Optional[int] = Field(default=None, ge=1)
    histogram_bins: int = Field(default=20, ge=1)
    histogram_range: float = Field(default=0.5, gt=0)
    bootstrap_resamples: int = Field(default=settings.BOOTSTRAP_RESAMPLES, ge=100)

    @field_validator("success_thresholds")
    @classmethod
    def _percentages(cls, value):
        if not value or any(not 0 < t < 100 for t in value):
            raise ValueError("success_thresholds must lie in (0, 100)")
        return value

    def eval_instances(self, family: str) -> int:
        return self.instances_per_point or settings.EVAL_INSTANCES[family]


class ParasiticSettings(_Section):
    """Anisotropic Pauli-channel robustness study"""
    p_exp: List[float] = Field(default_factory=lambda: list(settings.PARASITIC_P_EXP))
    rescale_factors: List[float] = Field(default_factory=lambda: list(settings.PARASITIC_RESCALE))
    repetitions: int = Field(default=settings.PARASITIC_REPETITIONS, ge=1)
    jitter: float = Field(default=settings.PARASITIC_JITTER, ge=0, lt=1)

    @field_validator("p_exp")
    @classmethod
    def _probabilities(cls, value):
        if any(not 0 <= p <= 1 for p in value):
            raise ValueError("p_exp values must lie in [0, 1]")
        return value


class ExperimentConfig(_Section):
    """Top-level experiment description (round-trips through JSON)"""
    family: FamilyName = "DC"
    dataset: DatasetSettings = Field(default_factory=DatasetSettings)
    training: TrainingHyperparameters = Field(default_factory=TrainingHyperparameters)
    architecture: ArchitectureSettings = Field(default_factory=ArchitectureSettings)
    evaluation: EvaluationThresholds = Field(default_factory=EvaluationThresholds)
    parasitic: ParasiticSettings = Field(default_factory=ParasiticSettings)
    methods: List[MethodName] = Field(default_factory=lambda: ["MF", "FF", "ANN_FF"])
    output_dir: str = str(settings.OUTPUT_DIR)
    master_seed: int = Field(default=20240101, ge=0, lt=2 ** 64)
    workers: int = Field(default=settings.DEFAULT_WORKERS, ge=1)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.model_validate_json(text)
        except ValidationError as e:
            raise ConfigError(f"Invalid experiment config: {e}") from e

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        return cls.from_json(path.read_text(encoding="utf-8"))

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Return a validated copy with CLI overrides applied (None values ignored)"""
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "k_factors":
                data["dataset"]["k_factors"] = list(value)
            else:
                data[key] = value
        try:
            return ExperimentConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"Invalid override: {e}") from e
