import numpy as np
import numpy.testing as npt
import pytest

from aslchamp.datastore import FeatureStore, dataset_fingerprint
from aslchamp.errors import EmptyDataset, ShapeMismatch
from aslchamp.gesture import EncodingConfig


def _arrays(seed=0, n=6):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, 8, 4)), rng.integers(0, 2, n)


def test_fingerprint(small_dataset):
    enc = EncodingConfig()
    names = ('COFFEE', 'TEA')
    fp = dataset_fingerprint(small_dataset, names, enc, 651)
    assert fp == dataset_fingerprint(small_dataset, names, enc, 651)
    assert fp != dataset_fingerprint(small_dataset, names, enc, 300)
    assert fp != dataset_fingerprint(small_dataset, names,
            EncodingConfig(presence_flags=True), 651)
    assert fp != dataset_fingerprint(small_dataset.subset(range(23)), names,
            enc, 651)


def test_append_skip_replace(tmp_path):
    fname = str(tmp_path/'cache.h5')
    X, y = _arrays()
    store = FeatureStore(fname)
    assert store.append_features('train', X, y, 'abc',
            class_names=('COFFEE', 'TEA'))
    assert store.has_features('train', 'abc')
    assert not store.append_features('train', X, y, 'abc')

    X2, y2 = _arrays(seed=1, n=3)
    assert store.append_features('train', X2, y2, 'def')
    assert not store.has_features('train', 'abc')
    Xs, ys, mask_len, info = store.extract_features('train')
    npt.assert_array_equal(Xs, X2)
    npt.assert_array_equal(ys, y2)
    npt.assert_array_equal(mask_len, [8, 8, 8])
    assert info['fingerprint'] == 'def'
    assert info['shape'] == [3, 8, 4]
    assert 'labels/train' not in store
    store.close()


def test_labels_table(tmp_path):
    X, y = _arrays()
    store = FeatureStore(str(tmp_path/'cache.h5'))
    store.append_features('val', X, y, 'abc', mask_len=np.arange(1, 7),
            class_names=('COFFEE', 'TEA'))
    labels = store['labels/val']
    assert labels.code.tolist() == y.tolist()
    assert set(labels.label) <= {'COFFEE', 'TEA'}
    npt.assert_array_equal(store.extract_features('val')[2], np.arange(1, 7))
    store.close()


def test_names_and_reopen(tmp_path):
    fname = str(tmp_path/'cache.h5')
    X, y = _arrays()
    store = FeatureStore(fname)
    store.append_features('test', X, y, 'a')
    store.append_features('3-way.split', X, y, 'b')
    assert store.names == ['num3_way_split', 'test']
    store.compress()

    store = FeatureStore(fname)
    assert store.has_features('3-way.split', 'b')
    npt.assert_array_equal(store.extract_features('test')[0], X)
    store.close()


def test_append_errors(tmp_path):
    store = FeatureStore(str(tmp_path/'cache.h5'))
    with pytest.raises(EmptyDataset):
        store.append_features('train', np.zeros((0, 8, 4)), [], 'a')
    with pytest.raises(ShapeMismatch):
        store.append_features('train', np.zeros((2, 8, 4)), [0], 'a')
    store.close()
