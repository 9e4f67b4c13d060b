"""
Dataset generation and stratified splitting

One source record per (grid point, instance): Poisson counts from the record
seed, MLE reconstruction, and the analytic ideal chi as the target. Failed
reconstructions are retried with a seed derived from the attempt number.
Augmented DC datasets store the five block rearrangements of every source.
"""

import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt
from tqdm import tqdm

from config.settings import RECONSTRUCTION_RETRIES, SHOW_PROGRESS
from dataset.spec import DatasetSpec
from estimators.features import DC_BLOCK_ORDERS, inverse_order, permute_dc_blocks
from quantum.channels import ChannelSpec
from quantum.process import ProcessMatrix
from quantum.tomography import simulate_noisy_chi
from utils.exceptions import ConfigError, ReconstructionError, StratificationError

logger = logging.getLogger(__name__)

ORIGINAL_VIEW = -1


@dataclass
class SampleRecord:
    """One simulated tomography run and its ground truth"""
    family: str
    params: Tuple[float, ...]
    k_factor: float
    n_base: float
    seed: int
    grid_index: int
    instance_index: int
    noisy: ProcessMatrix
    ideal: ProcessMatrix
    view: int = ORIGINAL_VIEW

    @property
    def spec(self) -> ChannelSpec:
        return ChannelSpec.from_params(self.family, self.params)

    @property
    def source_key(self) -> Tuple[int, int]:
        return self.grid_index, self.instance_index

    def regenerate(self) -> "SampleRecord":
        """Re-run the simulation from the stored seed"""
        noisy, ideal = simulate_noisy_chi(self.spec, self.k_factor, self.n_base, rng_seed=self.seed)
        if self.view != ORIGINAL_VIEW:
            noisy = permute_dc_blocks(noisy, DC_BLOCK_ORDERS[self.view])
        return replace(self, noisy=noisy, ideal=ideal)

    def original(self) -> "SampleRecord":
        """The un-permuted record an augmentation view was made from"""
        if self.view == ORIGINAL_VIEW:
            return self
        noisy = permute_dc_blocks(self.noisy, inverse_order(DC_BLOCK_ORDERS[self.view]))
        return replace(self, noisy=noisy, view=ORIGINAL_VIEW)


@dataclass
class Dataset:
    """Records of one (family, k) dataset, in generation order"""
    spec: DatasetSpec
    records: List[SampleRecord] = field(default_factory=list)
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def noisy_images(self) -> np.ndarray:
        return np.stack([r.noisy.to_image() for r in self.records])

    def ideal_images(self) -> np.ndarray:
        return np.stack([r.ideal.to_image() for r in self.records])

    def parameters(self) -> np.ndarray:
        return np.array([r.params for r in self.records], dtype=np.float64)

    def seeds(self) -> List[int]:
        return [r.seed for r in self.records]


# ============================================================================
# Generation
# ============================================================================

def _simulate_source(task) -> Optional[SampleRecord]:
    """Worker: one source record, or None once every attempt failed"""
    spec, grid_index, instance_index = task
    params = spec.grid[grid_index]
    channel = ChannelSpec.from_params(spec.family, params)
    retrying = Retrying(
        stop=stop_after_attempt(RECONSTRUCTION_RETRIES + 1),
        retry=retry_if_exception_type(ReconstructionError),
    )
    try:
        for attempt in retrying:
            with attempt:
                seed = spec.record_seed(grid_index, instance_index, attempt.retry_state.attempt_number - 1)
                noisy, ideal = simulate_noisy_chi(channel, spec.k_factor, spec.n_base, rng_seed=seed)
    except RetryError:
        logger.warning(f"{spec.family} grid point {grid_index} instance {instance_index}: "
                       f"reconstruction failed {RECONSTRUCTION_RETRIES + 1} times, skipped")
        return None
    return SampleRecord(spec.family, params, spec.k_factor, spec.n_base, seed,
                        grid_index, instance_index, noisy, ideal)


def _views(record: SampleRecord, augment: bool) -> List[SampleRecord]:
    if not augment:
        return [record]
    return [replace(record, noisy=permute_dc_blocks(record.noisy, order), view=i)
            for i, order in enumerate(DC_BLOCK_ORDERS)]


def generate(spec: DatasetSpec, workers: int = 1) -> Dataset:
    """
    Simulate every (grid point, instance) of a spec

    Args:
        spec: dataset specification
        workers: process count; output order and content do not depend on it

    Returns:
        Dataset with records in (grid point, instance, view) order
    """
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    tasks = [(spec, g, i) for g in range(len(spec.grid)) for i in range(spec.instances_per_point)]
    logger.info(f"Generating {spec.family} k={spec.k_factor}: {len(spec.grid)} grid points x "
                f"{spec.instances_per_point} instances ({spec.stream}, {workers} worker(s))")

    progress = dict(total=len(tasks), desc=f"{spec.family} k={spec.k_factor}", unit="rec",
                    disable=not SHOW_PROGRESS, leave=False)
    if workers == 1:
        sources = [_simulate_source(t) for t in tqdm(tasks, **progress)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(tasks) // (workers * 8))
            sources = list(tqdm(pool.map(_simulate_source, tasks, chunksize=chunk), **progress))

    dataset = Dataset(spec)
    for record in sources:
        if record is None:
            dataset.skipped += 1
            continue
        dataset.records.extend(_views(record, spec.augment))
    if dataset.skipped:
        logger.warning(f"{dataset.skipped} record(s) skipped after repeated reconstruction failures")
    return dataset


# ============================================================================
# Splitting
# ============================================================================

def _by_grid_point(records: Iterable[SampleRecord]) -> Dict[int, Dict[int, List[int]]]:
    """grid_index -> instance_index -> record positions"""
    groups: Dict[int, Dict[int, List[int]]] = defaultdict(lambda: defaultdict(list))
    for pos, record in enumerate(records):
        groups[record.grid_index][record.instance_index].append(pos)
    return groups


def split(dataset: Dataset, ratio: float = 0.8, seed: int = 0) -> Tuple[Dataset, Dataset]:
    """
    Stratified train/validation split

    Every grid point contributes round(ratio * n) of its n sources to training.
    All views of a source land on the same side; validation keeps one
    un-permuted record per source.

    Raises:
        StratificationError: a grid point has fewer than two sources
    """
    if not 0 < ratio < 1:
        raise ConfigError(f"Split ratio must lie in (0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    train_pos, val_pos = [], []
    groups = _by_grid_point(dataset.records)
    for grid_index in sorted(groups):
        sources = sorted(groups[grid_index])
        if len(sources) < 2:
            raise StratificationError(
                f"Grid point {grid_index} has {len(sources)} instance(s); at least 2 are needed to stratify"
            )
        n_train = min(max(int(round(ratio * len(sources))), 1), len(sources) - 1)
        chosen = set(rng.permutation(len(sources))[:n_train].tolist())
        for i, instance in enumerate(sources):
            positions = groups[grid_index][instance]
            if i in chosen:
                train_pos.extend(positions)
            else:
                val_pos.append(positions[0])

    train = Dataset(dataset.spec, [dataset.records[p] for p in sorted(train_pos)], dataset.skipped)
    validation = Dataset(replace(dataset.spec, augment=False),
                         [dataset.records[p].original() for p in sorted(val_pos)])
    logger.debug(f"Split {len(dataset)} records into {len(train)} train / {len(validation)} validation")
    return train, validation
