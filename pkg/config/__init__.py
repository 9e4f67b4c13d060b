"""
Configuration Module
Contains all system configuration
"""

from .settings import *
from .experiment import (
    ArchitectureSettings,
    DatasetSettings,
    EvaluationThresholds,
    ExperimentConfig,
    ParasiticSettings,
    TrainingHyperparameters,
)

__all__ = [
    'settings',
    'ArchitectureSettings',
    'DatasetSettings',
    'EvaluationThresholds',
    'ExperimentConfig',
    'ParasiticSettings',
    'TrainingHyperparameters',
]
