"""
Utilities Module
Benchmark workflows, metrics, reports and the shared exception hierarchy

Workflows:
    - bench_workflow: the five CLI commands
    - training_workflow: autoencoder and head training per signal level
    - evaluation: paired MF / FF / ANN_FF evaluation and summary tables
    - parasitic: anisotropic Pauli-channel robustness study
    - reporting: consolidated run report
"""

__all__ = [
    'bench_workflow',
    'evaluation',
    'exceptions',
    'metrics',
    'parasitic',
    'reporting',
    'run_directory',
    'training_workflow',
]
