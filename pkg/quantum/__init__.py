"""
Quantum Module
Channel models, process matrices and simulated tomography

Channels:
    - ChannelFamily, ChannelSpec: parameterized DC / GAD / CP / Pauli channels

Process:
    - apply_channel, choi_state, chi_from_choi, choi_from_chi
    - ProcessMatrix, analytic_chi, fidelity, fidelity_many

Tomography:
    - enumerate_settings, outcome_probabilities, sample_counts
    - mle_reconstruct, simulate_noisy_chi
"""

from .channels import TWO_PI, ChannelFamily, ChannelSpec
from .process import (
    ProcessMatrix,
    analytic_chi,
    apply_channel,
    bell_pauli_basis,
    chi_from_choi,
    choi_from_chi,
    choi_state,
    fidelity,
    fidelity_many,
    kraus_operators,
    maximally_entangled_state,
    pauli_basis,
)
from .tomography import (
    CountsTable,
    MeasurementSetting,
    ReconstructionResult,
    enumerate_settings,
    expected_counts,
    linear_inversion,
    log_likelihood,
    mle_reconstruct,
    outcome_probabilities,
    sample_counts,
    simulate_counts,
    simulate_noisy_chi,
)

__all__ = [
    'TWO_PI',
    'ChannelFamily',
    'ChannelSpec',
    'ProcessMatrix',
    'analytic_chi',
    'apply_channel',
    'bell_pauli_basis',
    'chi_from_choi',
    'choi_from_chi',
    'choi_state',
    'fidelity',
    'fidelity_many',
    'kraus_operators',
    'maximally_entangled_state',
    'pauli_basis',
    'CountsTable',
    'MeasurementSetting',
    'ReconstructionResult',
    'enumerate_settings',
    'expected_counts',
    'linear_inversion',
    'log_likelihood',
    'mle_reconstruct',
    'outcome_probabilities',
    'sample_counts',
    'simulate_counts',
    'simulate_noisy_chi',
]
