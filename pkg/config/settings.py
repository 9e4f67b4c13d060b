"""
Configuration and settings for the neural process-tomography benchmark
Defaults come from the reference tables; every tunable can be overridden
through a QTOMO_* environment variable (see .env.example)
"""

import os
import math
import logging
import sys
from pathlib import Path
from typing import Dict, Optional

from dotenv import load_dotenv

load_dotenv()

CODE_VERSION = "1.0.0"


def _env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    return float(value) if value not in (None, "") else default


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    return int(value) if value not in (None, "") else default


def _env_flag(name: str, default: bool) -> bool:
    value = os.getenv(name)
    if value in (None, ""):
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


# ==================== PATHS ====================
OUTPUT_DIR = Path(os.getenv("QTOMO_OUTPUT_DIR", "output"))
LOGS_DIR = Path(os.getenv("QTOMO_LOGS_DIR", "logs"))

# ==================== LOGGING ====================
LOG_FILE = LOGS_DIR / "qtomo.log"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
COLOR_LOG_FORMAT = "%(log_color)s%(asctime)s - %(name)s - %(levelname)s%(reset)s - %(message)s"
LOG_LEVEL = os.getenv("QTOMO_LOG_LEVEL", "INFO").upper()
SHOW_PROGRESS = _env_flag("QTOMO_PROGRESS", True)

# ==================== NUMERICAL TOLERANCES ====================
HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-8
TRACE_TOL = 1e-8
PROBABILITY_SUM_TOL = 1e-12
LOG_FLOOR = 1e-300

# ==================== TOMOGRAPHY ====================
N_BASE = _env_float("QTOMO_N_BASE", 2000.0)
SIGNAL_LEVELS = (0.1, 0.5, 1.0)
MLE_MAX_ITERATIONS = _env_int("QTOMO_MLE_MAX_ITERATIONS", 2000)
MLE_GRADIENT_TOL = 1e-6
MLE_RELATIVE_TOL = 1e-10
# Weight of the maximally mixed state blended into the linear-inversion start
MLE_INIT_MIXING = 1e-8
RECONSTRUCTION_RETRIES = 3

# ==================== NEURAL NETWORKS ====================
# kernel size (k), latent width (w), FF width factor (g), branch count
ARCHITECTURE_TABLE: Dict[str, Dict[str, int]] = {
    "DC": {"kernel": 2, "latent": 40, "width_factor": 2, "branches": 1},
    "GAD": {"kernel": 2, "latent": 40, "width_factor": 2, "branches": 2},
    "CP": {"kernel": 4, "latent": 30, "width_factor": 1, "branches": 1},
}
ENCODER_CHANNELS = (16, 32, 64)
BATCHNORM_MOMENTUM = 0.1
BATCHNORM_EPSILON = 1e-5
LEARNING_RATE = 1e-3
BATCH_SIZE = 32
MAX_EPOCHS = 20
EARLY_STOP_PATIENCE = 5
SPLIT_RATIO = 0.8

# ==================== EVALUATION ====================
RESIDUE_CUTOFF = 0.1
SUCCESS_THRESHOLDS = (90.0, 95.0, 99.0)
CP_ABSOLUTE_CUTOFF = math.pi / 24
CP_RELATIVE_CUTOFF = 0.03
EVAL_INSTANCES = {"DC": 300, "GAD": 100, "CP": 500}
BOOTSTRAP_RESAMPLES = 2000

# ==================== PARASITIC STUDY ====================
PARASITIC_P_EXP = (0.09, 0.3, 0.64, 1.0)
PARASITIC_RESCALE = (0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0)
PARASITIC_REPETITIONS = 300
PARASITIC_JITTER = 0.1

# ==================== EXECUTION ====================
DEFAULT_WORKERS = _env_int("QTOMO_WORKERS", 1)
RUN_SLOW_TESTS = _env_flag("QTOMO_RUN_SLOW", False)


def setup_logging(level: Optional[str] = None, log_file: Optional[Path] = None) -> None:
    """
    Setup console (colored) and file logging

    Args:
        level: Log level name, defaults to LOG_LEVEL
        log_file: Log file path, defaults to LOG_FILE
    """
    import colorlog

    root = logging.getLogger()
    if getattr(root, "_qtomo_configured", False):
        if level:
            root.setLevel(getattr(logging, level.upper()))
        return

    root.setLevel(getattr(logging, (level or LOG_LEVEL).upper()))

    console = colorlog.StreamHandler(sys.stdout)
    console.setFormatter(colorlog.ColoredFormatter(COLOR_LOG_FORMAT))
    root.addHandler(console)

    log_path = Path(log_file) if log_file else LOG_FILE
    log_path.parent.mkdir(parents=True, exist_ok=True)
    file_handler = logging.FileHandler(log_path, encoding="utf-8")
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(file_handler)

    root._qtomo_configured = True
