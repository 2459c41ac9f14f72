import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aslchamp.errors import FormatError, SchemaError
from aslchamp.filetypes import (DATASET_MAGIC, read_dataset, read_records,
        record_to_sample, sample_to_record, write_dataset, write_records)
from aslchamp.gesture import GestureDataset

from conftest import make_sample


def test_dataset_round_trip(tmp_path, small_dataset):
    path = str(tmp_path/'ds.jsonl')
    write_dataset(small_dataset, path)
    back = read_dataset(path)
    assert back == small_dataset
    assert back.provenance == small_dataset.provenance
    assert len(back) == 24


def test_empty_dataset_round_trip(tmp_path, empty_dataset):
    path = str(tmp_path/'empty.jsonl')
    assert write_dataset(empty_dataset, path) == 0
    with open(path) as f:
        lines = f.read().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])['magic'] == DATASET_MAGIC
    assert len(read_dataset(path)) == 0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2**31),
    st.sampled_from([(True, True), (False, True), (True, False)]),
    st.integers(1, 6)), max_size=4))
def test_random_datasets_round_trip(tmp_path_factory, specs):
    samples = [make_sample(n_frames=n, hands=hands, seed=seed)
            for seed, hands, n in specs]
    ds = GestureDataset(samples, provenance='random')
    path = str(tmp_path_factory.mktemp('rt')/'ds.jsonl')
    write_dataset(ds, path)
    assert read_dataset(path) == ds


def test_sample_record_keeps_absent_hands_empty():
    sample = make_sample(n_frames=3, hands=(False, True))
    record = sample_to_record(sample)
    assert all(frame['left'] is None for frame in record['frames'])
    assert len(record['frames'][0]['right']['joints']) == 25
    assert record_to_sample(record) == sample


def test_corrupted_magic(tmp_path, small_dataset):
    path = str(tmp_path/'ds.jsonl')
    write_dataset(small_dataset.subset([0]), path)
    with open(path) as f:
        text = f.read()
    with open(path, 'w') as f:
        f.write(text.replace(DATASET_MAGIC, 'ASLCHAMP-XX', 1))
    with pytest.raises(FormatError):
        read_dataset(path)


def test_binary_garbage_is_a_format_error(tmp_path):
    path = tmp_path/'junk.jsonl'
    path.write_bytes(b'\xff\xfe\x00garbage')
    with pytest.raises(FormatError):
        read_dataset(str(path))


def test_unsupported_version(tmp_path):
    path = str(tmp_path/'v9.jsonl')
    write_records(path, DATASET_MAGIC, [], version=9)
    with pytest.raises(FormatError):
        read_dataset(path)


def test_malformed_record(tmp_path):
    path = str(tmp_path/'bad.jsonl')
    write_records(path, DATASET_MAGIC, [{'label': 'COFFEE'}])
    with pytest.raises(SchemaError):
        read_dataset(path)


def test_invalid_sample_on_read(tmp_path):
    record = sample_to_record(make_sample(n_frames=4))
    record['frames'][2]['right']['joints'].pop()
    path = str(tmp_path/'short.jsonl')
    write_records(path, DATASET_MAGIC, [record])
    with pytest.raises(SchemaError) as info:
        read_dataset(path)
    assert 'joint-count' in str(info.value)


def test_invalid_sample_is_not_written(tmp_path):
    ds = GestureDataset([make_sample(label='ESPRESSO')])
    with pytest.raises(SchemaError):
        write_dataset(ds, str(tmp_path/'x.jsonl'))


def test_count_mismatch(tmp_path):
    path = str(tmp_path/'count.jsonl')
    record = sample_to_record(make_sample())
    write_records(path, DATASET_MAGIC, [record], count=2)
    with pytest.raises(FormatError):
        read_dataset(path)


def test_generic_records(tmp_path):
    path = str(tmp_path/'r.jsonl')
    n = write_records(path, 'TEST-MAGIC', ({'k': k} for k in range(3)),
            note='x')
    assert n == 3
    header, records = read_records(path, 'TEST-MAGIC')
    assert header['note'] == 'x'
    assert [r for _, r in records] == [{'k': 0}, {'k': 1}, {'k': 2}]


def test_floats_survive_exactly(tmp_path):
    sample = make_sample(n_frames=2, seed=11)
    joints = np.array(sample.joints)
    joints[0, 1, 0, 0] = 0.1 + 0.2
    joints[1, 1, 0, 1] = np.nextafter(1., 2.)
    sample = sample.replace(joints=joints)
    path = str(tmp_path/'f.jsonl')
    write_dataset(GestureDataset([sample]), path)
    assert read_dataset(path)[0] == sample
