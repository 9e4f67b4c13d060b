"""
Dataset Module
Simulated training and evaluation corpora

Components:
    - DatasetSpec, default_grid: what to simulate
    - generate, split: records and stratified train/validation splits
    - save_dataset, load_dataset, DatasetReader: binary dataset files
"""

from .generator import Dataset, SampleRecord, generate, split
from .spec import DatasetSpec, default_grid
from .storage import DatasetReader, file_digest, load_dataset, read_header, save_dataset

__all__ = [
    'Dataset',
    'SampleRecord',
    'generate',
    'split',
    'DatasetSpec',
    'default_grid',
    'DatasetReader',
    'file_digest',
    'load_dataset',
    'read_header',
    'save_dataset',
]
