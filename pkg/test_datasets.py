"""
Test datasets - grids, generation, splitting and the binary file format
"""

import math

import numpy as np
import pytest

from config.experiment import DatasetSettings
from dataset.generator import ORIGINAL_VIEW, Dataset, SampleRecord, generate, split
from dataset.spec import DatasetSpec, default_grid
from dataset.storage import DatasetReader, file_digest, load_dataset, read_header, save_dataset
from quantum.channels import ChannelSpec
from quantum.process import analytic_chi
from utils.exceptions import ChecksumError, ConfigError, DatasetFormatError, StratificationError


def small_spec(family="DC", grid=((0.2,), (0.6,)), instances=5, k=0.5, augment=False, seed=11, stream="train"):
    return DatasetSpec(family=family, k_factor=k, grid=grid, instances_per_point=instances,
                       master_seed=seed, augment=augment, stream=stream)


@pytest.fixture(scope="module")
def dc_dataset():
    return generate(small_spec())


@pytest.fixture(scope="module")
def augmented_dataset():
    return generate(small_spec(augment=True, instances=4))


# ============================================================================
# Grids and specs
# ============================================================================

def test_default_grid_sizes():
    dc = default_grid("DC")
    assert len(dc) == 20 and dc[0] == (0.05,) and dc[-1] == (1.0,)
    assert len(default_grid("GAD")) == 121
    cp = default_grid("CP")
    assert len(cp) == 16
    assert cp[0] == (0.0,) and all(0 <= phi < 2 * math.pi for (phi,) in cp)


def test_default_record_counts():
    dc = DatasetSpec.for_family("DC", 0.1)
    assert dc.augment and dc.source_count == 2000 and dc.expected_records == 10000
    assert DatasetSpec.for_family("DC", 0.1, settings=DatasetSettings(augment=False)).expected_records == 2000
    assert DatasetSpec.for_family("GAD", 0.1).expected_records == 60500
    assert DatasetSpec.for_family("CP", 0.1).expected_records == 8000
    assert not DatasetSpec.for_family("DC", 0.1, stream="evaluate").augment


def test_invalid_specs():
    with pytest.raises(ConfigError):
        default_grid("DC", 0.0)
    with pytest.raises(ConfigError):
        small_spec(k=0.0)
    with pytest.raises(ConfigError):
        small_spec(family="CP", grid=((1.0,),), augment=True)
    with pytest.raises(ConfigError):
        small_spec(stream="holdout")


def test_spec_dict_round_trip():
    spec = DatasetSpec.for_family("GAD", 0.5, master_seed=2 ** 63 + 5, settings=DatasetSettings(grid_step=0.5))
    assert DatasetSpec.from_dict(spec.to_dict()) == spec


def test_record_seeds_are_distinct_per_stream():
    train = small_spec()
    evaluate = small_spec(stream="evaluate")
    seeds = {train.record_seed(g, i) for g in range(2) for i in range(5)}
    assert len(seeds) == 10
    assert seeds.isdisjoint({evaluate.record_seed(g, i) for g in range(2) for i in range(5)})
    assert train.record_seed(1, 3) == small_spec().record_seed(1, 3)


# ============================================================================
# Generation
# ============================================================================

def test_generate_counts_and_order(dc_dataset):
    assert len(dc_dataset) == 10 and dc_dataset.skipped == 0
    keys = [r.source_key for r in dc_dataset]
    assert keys == sorted(keys)
    assert all(r.view == ORIGINAL_VIEW for r in dc_dataset)


def test_records_regenerate_bit_identically(dc_dataset):
    for record in dc_dataset.records[:3]:
        again = record.regenerate()
        np.testing.assert_array_equal(again.noisy.chi, record.noisy.chi)
        np.testing.assert_array_equal(again.ideal.chi, analytic_chi(ChannelSpec.dc(record.params[0])).chi)


def test_ideal_matrices_are_valid(dc_dataset):
    for record in dc_dataset:
        chi = record.ideal.chi
        assert abs(np.trace(chi) - 1) < 1e-10
        assert np.linalg.eigvalsh(chi).min() >= -1e-10


def test_augmentation_multiplies_records(augmented_dataset):
    assert len(augmented_dataset) == 2 * 4 * 5
    first = augmented_dataset.records[:5]
    assert [r.view for r in first] == [0, 1, 2, 3, 4]
    assert len({r.source_key for r in first}) == 1
    base = first[0].original().noisy.chi
    for r in first:
        np.testing.assert_array_equal(r.original().noisy.chi, base)
        np.testing.assert_array_equal(r.ideal.chi, first[0].ideal.chi)
    np.testing.assert_array_equal(first[2].regenerate().noisy.chi, first[2].noisy.chi)


def test_parallel_generation_matches_serial():
    spec = small_spec(instances=3)
    serial = generate(spec, workers=1)
    parallel = generate(spec, workers=2)
    assert [r.seed for r in serial] == [r.seed for r in parallel]
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.noisy.chi, b.noisy.chi)


# ============================================================================
# Splitting
# ============================================================================

def test_split_is_stratified_and_disjoint(dc_dataset):
    train, validation = split(dc_dataset, 0.8, seed=3)
    assert len(train) == 8 and len(validation) == 2
    for grid_index in (0, 1):
        assert sum(r.grid_index == grid_index for r in train) == 4
    train_keys = {r.source_key for r in train}
    val_keys = {r.source_key for r in validation}
    assert train_keys.isdisjoint(val_keys)
    assert train_keys | val_keys == {r.source_key for r in dc_dataset}


def test_split_is_deterministic(dc_dataset):
    a, _ = split(dc_dataset, 0.8, seed=4)
    b, _ = split(dc_dataset, 0.8, seed=4)
    assert [r.source_key for r in a] == [r.source_key for r in b]


def test_split_keeps_views_together(augmented_dataset):
    train, validation = split(augmented_dataset, 0.75, seed=5)
    assert len(train) == 2 * 3 * 5
    assert len(validation) == 2
    assert all(r.view == ORIGINAL_VIEW for r in validation)
    assert not validation.spec.augment
    train_keys = {r.source_key for r in train}
    assert all(k not in train_keys for k in (r.source_key for r in validation))


def test_split_needs_two_instances():
    dataset = generate(small_spec(instances=1))
    with pytest.raises(StratificationError):
        split(dataset)
    with pytest.raises(ConfigError):
        split(dataset, ratio=1.0)


def test_default_dc_split_sizes():
    spec = DatasetSpec.for_family("DC", 0.1, settings=DatasetSettings(augment=False))
    records = [_stub_record(g, i) for g in range(len(spec.grid)) for i in range(spec.instances_per_point)]
    train, validation = split(Dataset(spec, records))
    assert (len(train), len(validation)) == (1600, 400)


def _stub_record(grid_index, instance_index):
    chi = analytic_chi(ChannelSpec.dc(0.5))
    return SampleRecord("DC", (0.5,), 0.1, 2000.0, 0, grid_index, instance_index, chi, chi)


# ============================================================================
# Files
# ============================================================================

def test_save_load_round_trip(tmp_path, augmented_dataset):
    path = save_dataset(augmented_dataset, tmp_path / "dc.qds")
    loaded = load_dataset(path)
    assert loaded.spec == augmented_dataset.spec
    assert len(loaded) == len(augmented_dataset)
    for a, b in zip(augmented_dataset, loaded):
        assert (a.seed, a.grid_index, a.instance_index, a.view, a.params) == \
               (b.seed, b.grid_index, b.instance_index, b.view, b.params)
        np.testing.assert_array_equal(a.noisy.chi, b.noisy.chi)
        np.testing.assert_array_equal(a.ideal.chi, b.ideal.chi)


def test_header_readable_alone(tmp_path, dc_dataset):
    path = save_dataset(dc_dataset, tmp_path / "dc.qds")
    header = read_header(path)
    assert header["record_count"] == 10
    assert header["family"] == "DC"
    assert header["checksum"] == "sha256-64"
    assert header["skipped_count"] == 0


def test_saving_twice_is_byte_identical(tmp_path, dc_dataset):
    a = save_dataset(dc_dataset, tmp_path / "a.qds")
    b = save_dataset(dc_dataset, tmp_path / "b.qds")
    assert file_digest(a) == file_digest(b)


def test_streaming_reader(tmp_path, dc_dataset):
    path = save_dataset(dc_dataset, tmp_path / "dc.qds")
    with DatasetReader(path) as reader:
        assert len(reader) == 10
        first = next(iter(reader))
    assert first.seed == dc_dataset.records[0].seed


def test_truncated_file_names_record(tmp_path, dc_dataset):
    path = save_dataset(dc_dataset, tmp_path / "dc.qds")
    data = path.read_bytes()
    with DatasetReader(path) as reader:
        itemsize = reader.dtype.itemsize
    header_len = data.index(b"\n") + 1
    path.write_bytes(data[:header_len + 3 * itemsize + 100])
    with pytest.raises(DatasetFormatError) as exc_info:
        load_dataset(path)
    assert exc_info.value.record_index == 3


def test_corrupted_record_fails_checksum(tmp_path, dc_dataset):
    path = save_dataset(dc_dataset, tmp_path / "dc.qds")
    data = bytearray(path.read_bytes())
    header_len = data.index(b"\n") + 1
    with DatasetReader(path) as reader:
        itemsize = reader.dtype.itemsize
    data[header_len + 2 * itemsize + 40] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(ChecksumError) as exc_info:
        load_dataset(path)
    assert exc_info.value.record_index == 2


def test_footer_count_mismatch(tmp_path, dc_dataset):
    path = save_dataset(dc_dataset, tmp_path / "dc.qds")
    data = bytearray(path.read_bytes())
    data[-8:] = (9).to_bytes(8, "little")
    path.write_bytes(bytes(data))
    with pytest.raises(DatasetFormatError):
        load_dataset(path)


def test_not_a_dataset(tmp_path):
    path = tmp_path / "junk.qds"
    path.write_bytes(b'{"format": "other"}\n')
    with pytest.raises(DatasetFormatError):
        read_header(path)
    with pytest.raises(DatasetFormatError):
        read_header(tmp_path / "missing.qds")
