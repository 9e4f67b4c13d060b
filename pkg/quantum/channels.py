"""
Parameterized channel families

ChannelSpec is the ground truth every simulation starts from:
    DC    - depolarizing channel, p in [0, 1]
    GAD   - generalized amplitude damping, eta, gamma in [0, 1]
    CP    - controlled-phase two-qubit gate, phi in [0, 2*pi)
    PAULI - general Pauli channel, p0..p3 >= 0 summing to 1
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np

from utils.exceptions import ConfigError

TWO_PI = 2 * math.pi
PAULI_SUM_TOL = 1e-12


class ChannelFamily(Enum):
    """Supported channel families"""
    DC = "DC"
    GAD = "GAD"
    CP = "CP"
    PAULI = "PAULI"

    @classmethod
    def parse(cls, value) -> "ChannelFamily":
        if isinstance(value, ChannelFamily):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ConfigError(f"Unknown channel family: {value}")

    @property
    def n_qubits(self) -> int:
        return 2 if self is ChannelFamily.CP else 1

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        return PARAMETER_NAMES[self]

    @property
    def parameter_box(self) -> List[Tuple[float, float]]:
        """Closed physical range of every parameter"""
        return PARAMETER_BOXES[self]


PARAMETER_NAMES: Dict[ChannelFamily, Tuple[str, ...]] = {
    ChannelFamily.DC: ("p",),
    ChannelFamily.GAD: ("eta", "gamma"),
    ChannelFamily.CP: ("phi",),
    ChannelFamily.PAULI: ("p0", "p1", "p2", "p3"),
}

PARAMETER_BOXES: Dict[ChannelFamily, List[Tuple[float, float]]] = {
    ChannelFamily.DC: [(0.0, 1.0)],
    ChannelFamily.GAD: [(0.0, 1.0), (0.0, 1.0)],
    ChannelFamily.CP: [(0.0, TWO_PI)],
    ChannelFamily.PAULI: [(0.0, 1.0)] * 4,
}


@dataclass(frozen=True)
class ChannelSpec:
    """A channel family together with its parameter values"""
    family: ChannelFamily
    params: Tuple[float, ...]

    def __post_init__(self):
        family = ChannelFamily.parse(self.family)
        params = tuple(float(v) for v in self.params)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", params)
        self._validate()

    def _validate(self):
        expected = len(PARAMETER_NAMES[self.family])
        if len(self.params) != expected:
            raise ConfigError(
                f"{self.family.value} expects {expected} parameter(s), got {len(self.params)}"
            )
        if any(not math.isfinite(v) for v in self.params):
            raise ConfigError(f"Non-finite parameter in {self.family.value}: {self.params}")

        if self.family is ChannelFamily.CP:
            phi = self.params[0]
            if not 0.0 <= phi < TWO_PI:
                raise ConfigError(f"CP phase must lie in [0, 2pi), got {phi}")
        elif self.family is ChannelFamily.PAULI:
            if any(v < 0 for v in self.params):
                raise ConfigError(f"Pauli probabilities must be >= 0, got {self.params}")
            if abs(sum(self.params) - 1.0) > PAULI_SUM_TOL:
                raise ConfigError(f"Pauli probabilities must sum to 1, got {sum(self.params)!r}")
        else:
            for name, value in zip(PARAMETER_NAMES[self.family], self.params):
                if not 0.0 <= value <= 1.0:
                    raise ConfigError(f"{self.family.value} parameter {name} must lie in [0, 1], got {value}")

    # ------------------------------------------------------------------ factories

    @classmethod
    def dc(cls, p: float) -> "ChannelSpec":
        return cls(ChannelFamily.DC, (p,))

    @classmethod
    def gad(cls, eta: float, gamma: float) -> "ChannelSpec":
        return cls(ChannelFamily.GAD, (eta, gamma))

    @classmethod
    def cp(cls, phi: float) -> "ChannelSpec":
        return cls(ChannelFamily.CP, (phi,))

    @classmethod
    def pauli(cls, p0: float, p1: float, p2: float, p3: float) -> "ChannelSpec":
        return cls(ChannelFamily.PAULI, (p0, p1, p2, p3))

    @classmethod
    def from_params(cls, family, params) -> "ChannelSpec":
        return cls(ChannelFamily.parse(family), tuple(params))

    # ------------------------------------------------------------------ properties

    @property
    def n_qubits(self) -> int:
        return self.family.n_qubits

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        return PARAMETER_NAMES[self.family]

    def pauli_probabilities(self) -> np.ndarray:
        """(p0, p1, p2, p3) for the Pauli-form families"""
        if self.family is ChannelFamily.DC:
            p = self.params[0]
            return np.array([1.0 - p, p / 3.0, p / 3.0, p / 3.0])
        if self.family is ChannelFamily.PAULI:
            return np.array(self.params)
        raise ConfigError(f"{self.family.value} is not a Pauli channel")

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.parameter_names, self.params))


def gad_kraus_operators(eta: float, gamma: float) -> List[np.ndarray]:
    """K0..K3 of the generalized amplitude damping channel"""
    k0 = math.sqrt(1 - gamma) * np.array([[1, 0], [0, math.sqrt(1 - eta)]], dtype=complex)
    k1 = math.sqrt(eta * (1 - gamma)) * np.array([[0, 1], [0, 0]], dtype=complex)
    k2 = math.sqrt(gamma) * np.array([[math.sqrt(1 - eta), 0], [0, 1]], dtype=complex)
    k3 = math.sqrt(eta * gamma) * np.array([[0, 0], [1, 0]], dtype=complex)
    return [k0, k1, k2, k3]


def controlled_phase_unitary(phi: float) -> np.ndarray:
    """diag(1, 1, 1, exp(-i phi))"""
    return np.diag([1, 1, 1, np.exp(-1j * phi)]).astype(complex)
