import numpy as np
import numpy.testing as npt
import pytest

from aslchamp.errors import (ClassMismatch, EmptyDataset, InsufficientData,
        InvalidConfig)
from aslchamp.gesture import CANONICAL_CLASSES, EncodingConfig
from aslchamp.network import NetConfig, build_network
from aslchamp.evaluation import (SplitSpec, allocate, centroid_baseline,
        evaluate, metrics_from_confusion, metrics_from_predictions,
        plot_confusion, read_metrics_csv, render_metrics, split_dataset,
        split_indices)
from aslchamp.synth import DatasetSpec, generate_dataset


@pytest.mark.parametrize('n, counts', [
    (15, [12, 2, 1]),
    (2700, [2160, 270, 270]),
    (3, [1, 1, 1]),
    (10, [8, 1, 1]),
    (2, [2, 0, 0]),
])
def test_allocate(n, counts):
    assert allocate(n, (0.8, 0.1, 0.1)) == counts
    assert sum(allocate(n, (0.5, 0.3, 0.2))) == n


def test_signer_split_is_disjoint(small_dataset):
    train, val, test = split_dataset(small_dataset, SplitSpec(seed=4))
    signers = [set(part.signers) for part in (train, val, test)]
    assert [len(s) for s in signers] == [4, 1, 1]
    assert not signers[0] & signers[1]
    assert not signers[0] & signers[2]
    assert not signers[1] & signers[2]
    assert len(train) + len(val) + len(test) == len(small_dataset)
    assert 'train split' in train.provenance


def test_split_is_seeded(small_dataset):
    a = split_indices(small_dataset, SplitSpec(seed=1))
    b = split_indices(small_dataset, SplitSpec(seed=1))
    for x, y in zip(a, b):
        npt.assert_array_equal(x, y)


def test_sample_split(small_dataset):
    parts = split_indices(small_dataset, SplitSpec(unit='sample', seed=2))
    assert [len(p) for p in parts] == [19, 3, 2]
    joined = np.sort(np.concatenate(parts))
    npt.assert_array_equal(joined, np.arange(24))


def test_split_needs_three_signers(library, empty_dataset):
    spec = DatasetSpec(classes=('CUP',), signers=2, repetitions_per_class=2)
    with pytest.raises(InsufficientData):
        split_dataset(generate_dataset(spec, library))
    with pytest.raises(InsufficientData):
        split_dataset(empty_dataset)


@pytest.mark.parametrize('kwargs', [
    {'fractions': (0.8, 0.2)},
    {'fractions': (0.8, 0.3, 0.1)},
    {'fractions': (1.0, 0.0, 0.0)},
    {'unit': 'session'},
])
def test_bad_split_spec(kwargs):
    with pytest.raises(InvalidConfig):
        SplitSpec(**kwargs).validate()


def test_split_spec_dict():
    spec = SplitSpec((0.6, 0.2, 0.2), 'sample', 11)
    assert SplitSpec.from_dict(spec.to_dict()) == spec


def test_perfect_classifier():
    y = np.repeat(np.arange(9), 5)
    m = metrics_from_predictions(y, y, CANONICAL_CLASSES)
    assert m.accuracy == 1.
    assert m.n_samples == 45
    npt.assert_array_equal(m.confusion, 5*np.eye(9, dtype=int))
    assert set(m.per_class_recall.values()) == {1.}


def test_constant_classifier():
    y = np.repeat(np.arange(9), 4)
    m = metrics_from_predictions(y, np.zeros_like(y), CANONICAL_CLASSES)
    assert m.accuracy == pytest.approx(1/9.)
    assert m.per_class_recall['COFFEE'] == 1.
    assert m.per_class_recall['MONEY'] == 0.
    assert m.confusion[:, 0].sum() == 36
    assert m.confusion[:, 1:].sum() == 0


def test_metrics_orientation():
    # Two COFFEE samples recognized as TEA: row COFFEE, column TEA
    m = metrics_from_predictions([0, 0, 1], [1, 1, 1], ('COFFEE', 'TEA'))
    assert m.confusion.tolist() == [[0, 2], [0, 1]]
    assert m.to_frame().loc['COFFEE', 'TEA'] == 2
    assert np.isnan(metrics_from_confusion(np.zeros((2, 2)),
        ('COFFEE', 'TEA')).accuracy)
    with pytest.raises(ClassMismatch):
        metrics_from_confusion(np.zeros((2, 3)), ('COFFEE', 'TEA'))


class AlwaysTea(object):
    class_names = ('COFFEE', 'TEA')
    t_max = 300
    encoding = EncodingConfig()

    def predict_proba(self, X, batch_size=64, threads=1):
        return np.tile([0., 1.], (len(X), 1))


def test_evaluate_with_stub(small_dataset):
    m = evaluate(AlwaysTea(), small_dataset)
    assert m.accuracy == 0.5
    assert m.confusion.tolist() == [[0, 12], [0, 12]]
    assert m.per_class_recall == {'COFFEE': 0., 'TEA': 1.}


def test_evaluate_network(small_dataset, empty_dataset):
    cfg = NetConfig(conv1_filters=2, conv2_filters=2, lstm1_units=2,
            lstm2_units=2, dense_units=(2, 2, 2),
            class_names=('COFFEE', 'TEA'))
    net = build_network(cfg, seed=0)
    m = evaluate(net, small_dataset, batch_size=10, threads=2)
    assert m.n_samples == 24
    assert m.confusion.sum(axis=1).tolist() == [12, 12]
    assert 0. <= m.accuracy <= 1.
    with pytest.raises(EmptyDataset):
        evaluate(net, empty_dataset)


def test_evaluate_class_mismatch(small_dataset):
    cfg = NetConfig(t_max=12, conv1_filters=2, conv2_filters=2,
            lstm1_units=2, lstm2_units=2, dense_units=(2, 2, 2),
            class_names=('MILK', 'CUP'))
    with pytest.raises(ClassMismatch):
        evaluate(build_network(cfg), small_dataset)


def test_render_text():
    m = metrics_from_predictions([0, 0, 1], [1, 0, 1], ('COFFEE', 'TEA'))
    text = render_metrics(m).decode('utf-8')
    assert text.startswith('accuracy 0.6667 (2/3)\n')
    assert 'rows: produced sign, columns: recognized sign' in text
    assert 'COFFEE' in text and 'TEA' in text
    with pytest.raises(InvalidConfig):
        render_metrics(m, 'xml')


def test_render_csv(tmp_path):
    y = np.repeat(np.arange(9), 3)
    pred = np.roll(y, 1)
    m = metrics_from_predictions(y, pred, CANONICAL_CLASSES)
    data = render_metrics(m, 'csv')
    assert b',COFFEE,TEA,MILK,' in data.splitlines()[0]
    back = read_metrics_csv(data)
    npt.assert_array_equal(back.confusion, m.confusion)
    assert back.class_names == CANONICAL_CLASSES
    assert back.accuracy == m.accuracy
    fname = tmp_path/'m.csv'
    fname.write_bytes(data)
    assert read_metrics_csv(str(fname)).n_samples == 27


def test_plot_confusion(tmp_path):
    m = metrics_from_predictions([0, 1, 2, 2], [0, 1, 2, 1],
            ('COFFEE', 'TEA', 'MILK'))
    fname = tmp_path/'confusion.png'
    plot_confusion(m, str(fname))
    assert fname.stat().st_size > 0


def test_centroid_baseline(library):
    spec = DatasetSpec(classes=('COFFEE', 'MILK'), signers=4,
            repetitions_per_class=2, left_handed_ratio=0., master_seed=1)
    ds = generate_dataset(spec, library)
    held_out = np.array([s == 'S04' for s in ds.signers])
    train = ds.subset(np.nonzero(~held_out)[0])
    test = ds.subset(np.nonzero(held_out)[0])
    m = centroid_baseline(train, test)
    assert m.class_names == ('COFFEE', 'MILK')
    assert m.n_samples == 4
    assert m.accuracy == 1.

    with pytest.raises(ClassMismatch):
        centroid_baseline(test.subset([0]), test)
    with pytest.raises(EmptyDataset):
        centroid_baseline(train, test.subset([]))
