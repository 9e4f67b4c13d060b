"""
Dataset specifications and the default parameter grids
"""

import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from config.experiment import DatasetSettings
from config.settings import N_BASE
from quantum.channels import TWO_PI, ChannelFamily
from utils.exceptions import ConfigError

DEFAULT_STEPS = {ChannelFamily.DC: 0.05, ChannelFamily.GAD: 0.1}
DEFAULT_INSTANCES = {ChannelFamily.DC: 100, ChannelFamily.GAD: 500, ChannelFamily.CP: 500}

# seed streams keep training, evaluation and robustness records disjoint
STREAMS = {"train": 0, "evaluate": 1, "parasitic": 2}
_FAMILY_CODES = {ChannelFamily.DC: 0, ChannelFamily.GAD: 1, ChannelFamily.CP: 2, ChannelFamily.PAULI: 3}


def _unit_axis(step: float, start_at_zero: bool) -> np.ndarray:
    count = int(math.floor(1.0 / step + 1e-9))
    first = 0 if start_at_zero else 1
    return np.round(np.arange(first, count + 1) * step, 12)


def default_grid(family, step: Optional[float] = None) -> Tuple[Tuple[float, ...], ...]:
    """
    Parameter grid of a family

    DC:  p in (0, 1] with step 0.05 (0.05 ... 1)
    GAD: (eta, gamma) in [0, 1]^2 with step 0.1, eta-major
    CP:  phi = m pi / 6 (m = 0..11) and m pi / 4 (m = 1, 3, 5, 7), sorted;
         an explicit step gives phi in [0, 2pi) instead
    """
    family = ChannelFamily.parse(family)
    if step is not None and not step > 0:
        raise ConfigError(f"Grid step must be > 0, got {step}")

    if family is ChannelFamily.DC:
        return tuple((float(p),) for p in _unit_axis(step or DEFAULT_STEPS[family], start_at_zero=False))
    if family is ChannelFamily.GAD:
        axis = _unit_axis(step or DEFAULT_STEPS[family], start_at_zero=True)
        return tuple((float(e), float(g)) for e in axis for g in axis)
    if family is ChannelFamily.CP:
        if step is not None:
            return tuple((float(phi),) for phi in np.arange(0.0, TWO_PI, step))
        angles = {m * math.pi / 6 for m in range(12)} | {m * math.pi / 4 for m in (1, 3, 5, 7)}
        return tuple((phi,) for phi in sorted(angles))
    raise ConfigError(f"No default grid for the {family.value} family")


@dataclass(frozen=True)
class DatasetSpec:
    """Everything needed to regenerate a dataset bit for bit"""
    family: str
    k_factor: float
    grid: Tuple[Tuple[float, ...], ...]
    instances_per_point: int
    n_base: float = N_BASE
    master_seed: int = 0
    augment: bool = False
    stream: str = "train"
    grid_step: Optional[float] = None

    def __post_init__(self):
        family = ChannelFamily.parse(self.family)
        object.__setattr__(self, "family", family.value)
        object.__setattr__(self, "grid", tuple(tuple(float(v) for v in point) for point in self.grid))
        if not self.k_factor > 0:
            raise ConfigError(f"k_factor must be > 0, got {self.k_factor}")
        if not self.n_base > 0:
            raise ConfigError(f"n_base must be > 0, got {self.n_base}")
        if self.instances_per_point < 1:
            raise ConfigError(f"instances_per_point must be >= 1, got {self.instances_per_point}")
        if not self.grid:
            raise ConfigError("Dataset grid is empty")
        if self.stream not in STREAMS:
            raise ConfigError(f"Unknown seed stream: {self.stream}")
        if self.augment and family is not ChannelFamily.DC:
            raise ConfigError("Augmentation is only defined for the DC family")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")

    @property
    def channel_family(self) -> ChannelFamily:
        return ChannelFamily.parse(self.family)

    @property
    def source_count(self) -> int:
        return len(self.grid) * self.instances_per_point

    @property
    def views_per_source(self) -> int:
        return 5 if self.augment else 1

    @property
    def expected_records(self) -> int:
        return self.source_count * self.views_per_source

    def entropy(self, grid_index: int, instance_index: int, attempt: int = 0) -> list:
        """SeedSequence entropy of one record"""
        return [
            int(self.master_seed), STREAMS[self.stream], _FAMILY_CODES[self.channel_family],
            int(round(self.k_factor * 1_000_000)), int(grid_index), int(instance_index), int(attempt),
        ]

    def record_seed(self, grid_index: int, instance_index: int, attempt: int = 0) -> int:
        ss = np.random.SeedSequence(self.entropy(grid_index, instance_index, attempt))
        return int(ss.generate_state(1, dtype=np.uint64)[0])

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["grid"] = [list(point) for point in self.grid]
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "DatasetSpec":
        try:
            return cls(
                family=data["family"],
                k_factor=float(data["k_factor"]),
                grid=tuple(tuple(p) for p in data["grid"]),
                instances_per_point=int(data["instances_per_point"]),
                n_base=float(data["n_base"]),
                master_seed=int(data["master_seed"]),
                augment=bool(data["augment"]),
                stream=data.get("stream", "train"),
                grid_step=data.get("grid_step"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Invalid dataset spec: {e}") from e

    @classmethod
    def for_family(
        cls,
        family,
        k_factor: float,
        master_seed: int = 0,
        settings: Optional[DatasetSettings] = None,
        stream: str = "train",
        instances_per_point: Optional[int] = None,
    ) -> "DatasetSpec":
        """Spec with the family defaults, overridden by `settings` where given"""
        family = ChannelFamily.parse(family)
        settings = settings or DatasetSettings()
        step = settings.grid_step
        instances = instances_per_point or settings.instances_per_point or DEFAULT_INSTANCES[family]
        augment = stream == "train" and settings.augmentation_enabled(family.value)
        return cls(
            family=family.value,
            k_factor=float(k_factor),
            grid=default_grid(family, step),
            instances_per_point=int(instances),
            n_base=settings.n_base,
            master_seed=int(master_seed),
            augment=augment,
            stream=stream,
            grid_step=step,
        )
