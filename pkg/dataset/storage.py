"""
Dataset files

Layout:
    line 1   UTF-8 JSON header (sorted keys) terminated by b"\\n"
    records  fixed-size little-endian records, field order:
                 seed            uint64
                 grid_index      int64
                 instance_index  int64
                 view            int64   (-1 original, 0..4 augmentation view)
                 params          float64[n_params]
                 noisy           float64[2, d, d]   (real, imag planes)
                 ideal           float64[2, d, d]
                 checksum        uint64  (first 8 bytes of sha256 over the fields above)
    footer   uint64 record count

Files are written to a temporary name and renamed once the footer is in place.
"""

import hashlib
import logging
import os
from pathlib import Path
from typing import Dict, Iterator, Optional

import numpy as np
import orjson

from dataset.generator import Dataset, SampleRecord
from dataset.spec import DatasetSpec
from quantum.channels import ChannelFamily
from quantum.process import ProcessMatrix
from utils.exceptions import ChecksumError, DatasetFormatError, DimensionError

logger = logging.getLogger(__name__)

FORMAT_NAME = "qtomo-dataset"
FORMAT_VERSION = 1
CHECKSUM_ALGORITHM = "sha256-64"
MAX_HEADER_BYTES = 1 << 22
_FOOTER = np.dtype("<u8")


def record_dtype(family) -> np.dtype:
    family = ChannelFamily.parse(family)
    dim = 4 ** family.n_qubits
    return np.dtype([
        ("seed", "<u8"),
        ("grid_index", "<i8"),
        ("instance_index", "<i8"),
        ("view", "<i8"),
        ("params", "<f8", (len(family.parameter_names),)),
        ("noisy", "<f8", (2, dim, dim)),
        ("ideal", "<f8", (2, dim, dim)),
        ("checksum", "<u8"),
    ])


def _checksum(raw: bytes) -> int:
    """sha256 of a record without its trailing checksum field"""
    return int.from_bytes(hashlib.sha256(raw[:-8]).digest()[:8], "little")


def file_digest(path) -> str:
    """Hex sha256 of a whole file"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _header(dataset: Dataset) -> Dict:
    spec = dataset.spec
    return {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "checksum": CHECKSUM_ALGORITHM,
        "family": spec.family,
        "k_factor": spec.k_factor,
        "n_base": spec.n_base,
        "master_seed": spec.master_seed,
        "augmented": spec.augment,
        "instances": spec.instances_per_point,
        "grid_points": len(spec.grid),
        "record_count": len(dataset),
        "skipped_count": dataset.skipped,
        "spec": spec.to_dict(),
    }


def _encode(record: SampleRecord, dtype: np.dtype) -> bytes:
    row = np.zeros(1, dtype=dtype)
    row["seed"] = record.seed
    row["grid_index"] = record.grid_index
    row["instance_index"] = record.instance_index
    row["view"] = record.view
    row["params"] = record.params
    row["noisy"] = record.noisy.to_image()
    row["ideal"] = record.ideal.to_image()
    raw = bytearray(row.tobytes())
    raw[-8:] = _checksum(bytes(raw)).to_bytes(8, "little")
    return bytes(raw)


def save_dataset(dataset: Dataset, path) -> Path:
    """
    Write a dataset file

    Returns:
        The final path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dtype = record_dtype(dataset.spec.family)
    partial = path.with_name(path.name + ".partial")
    with open(partial, "wb") as f:
        f.write(orjson.dumps(_header(dataset), option=orjson.OPT_SORT_KEYS) + b"\n")
        for record in dataset.records:
            f.write(_encode(record, dtype))
        f.write(np.array([len(dataset)], dtype=_FOOTER).tobytes())
    os.replace(partial, path)
    logger.info(f"Saved {len(dataset)} {dataset.spec.family} records to {path}")
    return path


def _parse_header(line: bytes, path: Path) -> Dict:
    if not line.endswith(b"\n"):
        raise DatasetFormatError(f"{path}: header line is missing or truncated")
    try:
        header = orjson.loads(line)
    except orjson.JSONDecodeError as e:
        raise DatasetFormatError(f"{path}: malformed header: {e}") from e
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise DatasetFormatError(f"{path}: not a dataset file")
    if header.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported dataset version {header.get('format_version')!r}")
    for key in ("family", "record_count", "spec"):
        if key not in header:
            raise DatasetFormatError(f"{path}: header is missing '{key}'")
    return header


def read_header(path) -> Dict:
    """Header of a dataset file, without touching the records"""
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"Dataset file not found: {path}")
    with open(path, "rb") as f:
        return _parse_header(f.readline(MAX_HEADER_BYTES), path)


class DatasetReader:
    """
    Streaming reader; records are decoded one at a time

    Usage:
        with DatasetReader(path) as reader:
            for record in reader:
                ...
    """

    def __init__(self, path):
        self.path = Path(path)
        self.header = read_header(self.path)
        self.spec = DatasetSpec.from_dict(self.header["spec"])
        self.dtype = record_dtype(self.header["family"])
        self.record_count = int(self.header["record_count"])
        self._file = None
        self._offset = 0

    def __enter__(self) -> "DatasetReader":
        self._file = open(self.path, "rb")
        self._offset = len(self._file.readline(MAX_HEADER_BYTES))
        self._check_size()
        return self

    def __exit__(self, *exc):
        if self._file is not None:
            self._file.close()
            self._file = None

    def __len__(self) -> int:
        return self.record_count

    def _check_size(self):
        size = os.fstat(self._file.fileno()).st_size
        expected = self._offset + self.record_count * self.dtype.itemsize + _FOOTER.itemsize
        if size < expected:
            complete = max(size - self._offset, 0) // self.dtype.itemsize
            raise DatasetFormatError(f"{self.path}: file truncated", record_index=min(complete, self.record_count))
        if size > expected:
            raise DatasetFormatError(f"{self.path}: {size - expected} unexpected trailing bytes")
        self._file.seek(expected - _FOOTER.itemsize)
        (footer,) = np.frombuffer(self._file.read(_FOOTER.itemsize), dtype=_FOOTER)
        if int(footer) != self.record_count:
            raise DatasetFormatError(
                f"{self.path}: footer counts {int(footer)} records, header says {self.record_count}"
            )
        self._file.seek(self._offset)

    def _decode(self, raw: bytes, index: int) -> SampleRecord:
        row = np.frombuffer(raw, dtype=self.dtype)[0]
        if _checksum(raw) != int(row["checksum"]):
            raise ChecksumError(f"{self.path}: checksum mismatch", record_index=index)
        family = self.spec.channel_family
        try:
            noisy = ProcessMatrix.from_image(row["noisy"])
            ideal = ProcessMatrix.from_image(row["ideal"])
        except DimensionError as e:
            raise DatasetFormatError(f"{self.path}: undecodable matrices ({e})", record_index=index) from e
        return SampleRecord(
            family=family.value,
            params=tuple(float(v) for v in row["params"]),
            k_factor=self.spec.k_factor,
            n_base=self.spec.n_base,
            seed=int(row["seed"]),
            grid_index=int(row["grid_index"]),
            instance_index=int(row["instance_index"]),
            noisy=noisy,
            ideal=ideal,
            view=int(row["view"]),
        )

    def __iter__(self) -> Iterator[SampleRecord]:
        if self._file is None:
            raise DatasetFormatError(f"{self.path}: reader used outside its context")
        self._file.seek(self._offset)
        for index in range(self.record_count):
            raw = self._file.read(self.dtype.itemsize)
            if len(raw) != self.dtype.itemsize:
                raise DatasetFormatError(f"{self.path}: file truncated", record_index=index)
            yield self._decode(raw, index)


def load_dataset(path, limit: Optional[int] = None) -> Dataset:
    """Read a whole dataset file into memory"""
    with DatasetReader(path) as reader:
        records = []
        for record in reader:
            records.append(record)
            if limit is not None and len(records) >= limit:
                break
        return Dataset(reader.spec, records, int(reader.header.get("skipped_count", 0)))
