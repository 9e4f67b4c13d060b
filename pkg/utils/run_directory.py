"""
Run directory layout and locking

    <root>/
        .qtomo.lock
        config.json
        datasets/   <family>_k<k>_<stream>.qds, manifest.json
        models/     <family>_k<k>_<role>.qnn   (role: autoencoder, ann_ff, ff)
        training/   <family>_k<k>_<role>_loss.csv, <family>_summary.json
        evaluation/ <family>_*.csv, <family>_summary.json
        parasitic/  records.csv, summary.csv, summary.json
        report/     report.json, summary.csv
"""

import logging
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Optional

import orjson

from utils.exceptions import ConfigError, MissingArtifactError

logger = logging.getLogger(__name__)

LOCK_NAME = ".qtomo.lock"
JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY
MODEL_ROLES = ("autoencoder", "ann_ff", "ff")


def k_label(k_factor: float) -> str:
    return f"k{float(k_factor):g}"


def write_json(path: Path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(orjson.dumps(data, option=JSON_OPTIONS) + b"\n")
    return path


def read_json(path: Path) -> Optional[Dict]:
    """Parsed JSON file, or None when it does not exist"""
    path = Path(path)
    if not path.exists():
        return None
    try:
        return orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as e:
        raise MissingArtifactError(f"{path} is not valid JSON: {e}") from e


def write_csv(frame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.10g")
    return path


class RunDirectory:
    """Paths of one benchmark run"""

    def __init__(self, root):
        self.root = Path(root)

    def __repr__(self):
        return f"RunDirectory({str(self.root)!r})"

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def datasets_dir(self) -> Path:
        return self.root / "datasets"

    @property
    def manifest_path(self) -> Path:
        return self.datasets_dir / "manifest.json"

    @property
    def models_dir(self) -> Path:
        return self.root / "models"

    @property
    def training_dir(self) -> Path:
        return self.root / "training"

    @property
    def evaluation_dir(self) -> Path:
        return self.root / "evaluation"

    @property
    def parasitic_dir(self) -> Path:
        return self.root / "parasitic"

    @property
    def report_dir(self) -> Path:
        return self.root / "report"

    def dataset_path(self, family: str, k_factor: float, stream: str = "train") -> Path:
        return self.datasets_dir / f"{family}_{k_label(k_factor)}_{stream}.qds"

    def model_path(self, family: str, k_factor: float, role: str) -> Path:
        if role not in MODEL_ROLES:
            raise ConfigError(f"Unknown model role: {role}")
        return self.models_dir / f"{family}_{k_label(k_factor)}_{role}.qnn"

    def loss_path(self, family: str, k_factor: float, role: str) -> Path:
        return self.training_dir / f"{family}_{k_label(k_factor)}_{role}_loss.csv"

    def require(self, path: Path, what: str) -> Path:
        if not path.exists():
            raise MissingArtifactError(f"Missing {what}: {path}")
        return path

    @contextmanager
    def lock(self):
        """Exclusive lock on the run directory for the duration of one command"""
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / LOCK_NAME
        try:
            fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(
                f"Run directory {self.root} is in use by another command "
                f"(remove {path} if no command is running)"
            ) from None
        with os.fdopen(fd, "w") as f:
            f.write(str(os.getpid()))
        logger.debug(f"Locked {self.root}")
        try:
            yield self
        finally:
            path.unlink(missing_ok=True)
            logger.debug(f"Released {self.root}")
