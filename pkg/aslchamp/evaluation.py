'''Dataset splits, accuracy metrics and confusion matrices.

Confusion matrices follow one orientation everywhere: row ``i`` is the
produced (true) sign, column ``j`` the recognized (predicted) sign, and
classes are ordered by class code.
'''
import io
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Tuple

import numpy as np
import pandas as pd
import matplotlib.pyplot as plt

from aslchamp.errors import (EmptyDataset, InsufficientData, InvalidConfig,
        ClassMismatch)
from aslchamp.gesture import (EncodingConfig, encode_dataset, encode_features,
        sign_code)

logger = logging.getLogger(__name__)

SPLIT_NAMES = ('train', 'val', 'test')


@dataclass(frozen=True)
class SplitSpec:
    '''Train/validation/test fractions and the unit that is shuffled.

    unit : ``'signer'`` keeps all samples of a signer in one split;
        ``'sample'`` splits samples freely.
    '''
    fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    unit: str = 'signer'
    seed: int = 0

    def validate(self):
        if len(self.fractions) != 3 or min(self.fractions) <= 0:
            raise InvalidConfig("Need three positive split fractions, got {}"
                    .format(self.fractions))
        if not np.isclose(sum(self.fractions), 1., rtol=0., atol=1e-9):
            raise InvalidConfig("Split fractions must sum to 1, got {}"
                    .format(self.fractions))
        if self.unit not in ('signer', 'sample'):
            raise InvalidConfig("Split unit must be signer or sample, got {}"
                    .format(self.unit))
        return self

    def to_dict(self):
        return {'fractions': list(self.fractions), 'unit': self.unit,
                'seed': self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d['fractions']), d['unit'], d['seed'])


def allocate(n, fractions):
    '''Split ``n`` items by largest remainder.

    Each share gets ``floor(n*f)``; the leftover items go to the largest
    fractional parts, ties to the earlier share. When ``n`` is at least the
    number of shares, an empty share takes one item from the largest.
    '''
    fracs = [Fraction(f).limit_denominator(10**6) for f in fractions]
    total = sum(fracs)
    quotas = [n*f/total for f in fracs]
    counts = [int(q) for q in quotas]
    leftover = n - sum(counts)
    order = sorted(range(len(fracs)), key=lambda i: -(quotas[i] - counts[i]))
    for i in order[:leftover]:
        counts[i] += 1
    if n >= len(counts):
        for i in range(len(counts)):
            if counts[i] == 0:
                donor = int(np.argmax(counts))
                counts[donor] -= 1
                counts[i] += 1
    return counts


def split_indices(ds, spec):
    '''Index arrays ``(train, val, test)`` into ``ds``, each sorted.

    Raises
    ------
    InsufficientData
        Empty dataset, or fewer than three signers for a signer split.
    '''
    spec.validate()
    if len(ds) == 0:
        raise InsufficientData("Cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)

    if spec.unit == 'sample':
        order = rng.permutation(len(ds))
        counts = allocate(len(ds), spec.fractions)
        bounds = np.cumsum([0] + counts)
        return tuple(np.sort(order[bounds[k]:bounds[k+1]]) for k in range(3))

    signers = np.array(sorted(set(ds.signers)))
    if len(signers) < 3:
        raise InsufficientData("A signer split needs at least 3 signers, "
                "got {}".format(len(signers)))
    shuffled = signers[rng.permutation(len(signers))]
    counts = allocate(len(signers), spec.fractions)
    bounds = np.cumsum([0] + counts)
    owner = {}
    for k in range(3):
        for s in shuffled[bounds[k]:bounds[k+1]]:
            owner[s] = k
    which = np.array([owner[s] for s in ds.signers])
    return tuple(np.nonzero(which == k)[0] for k in range(3))


def split_dataset(ds, spec=None):
    '''Partition a dataset into train, validation and test datasets.'''
    if spec is None:
        spec = SplitSpec()
    parts = split_indices(ds, spec)
    out = tuple(ds.subset(idx, '{} [{} split]'.format(ds.provenance, name))
            for name, idx in zip(SPLIT_NAMES, parts))
    logger.info("Splitting: %s by %s -> %s", len(ds), spec.unit,
            '/'.join(str(len(p)) for p in out))
    return out


@dataclass(frozen=True, eq=False)
class EvalMetrics:
    accuracy: float
    per_class_recall: Dict[str, float]
    confusion: np.ndarray
    class_names: Tuple[str, ...]
    n_samples: int = field(default=0)

    def to_frame(self):
        '''Confusion counts; rows produced, columns recognized.'''
        return pd.DataFrame(self.confusion,
                index=pd.Index(self.class_names, name='produced'),
                columns=pd.Index(self.class_names, name='recognized'))


def metrics_from_confusion(confusion, class_names):
    confusion = np.asarray(confusion, dtype=np.int64)
    K = len(class_names)
    if confusion.shape != (K, K):
        raise ClassMismatch("Confusion matrix of shape {} for {} classes"
                .format(confusion.shape, K))
    rows = confusion.sum(axis=1)
    n = int(rows.sum())
    diag = np.diag(confusion)
    recall = {name: (float(diag[i])/rows[i] if rows[i] else float('nan'))
            for i, name in enumerate(class_names)}
    accuracy = float(diag.sum())/n if n else float('nan')
    return EvalMetrics(accuracy, recall, confusion, tuple(class_names), n)


def metrics_from_predictions(y_true, y_pred, class_names):
    '''Metrics from integer class positions in ``class_names``.'''
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    K = len(class_names)
    confusion = np.zeros((K, K), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    return metrics_from_confusion(confusion, class_names)


def evaluate(classifier, ds, batch_size=64, threads=1):
    '''Run a classifier over a dataset.

    Parameters
    ----------
    classifier : ChampNet or compatible
        Needs ``class_names``, ``t_max``, ``encoding`` and
        ``predict_proba(X, batch_size, threads)``.

    ds : GestureDataset

    Raises
    ------
    EmptyDataset

    ClassMismatch
        A sample label is not one of the classifier's classes.
    '''
    if len(ds) == 0:
        raise EmptyDataset("Nothing to evaluate")
    X, y, _ = encode_dataset(ds, classifier.class_names, classifier.encoding,
            classifier.t_max)
    probs = classifier.predict_proba(X, batch_size, threads)
    m = metrics_from_predictions(y, np.argmax(probs, axis=1),
            classifier.class_names)
    logger.info("Evaluating: %d samples, accuracy %.4f", m.n_samples,
            m.accuracy)
    return m


def render_metrics(m, fmt='text'):
    '''Metrics as bytes: a labeled text grid or CSV.'''
    df = m.to_frame()
    if fmt == 'csv':
        return df.to_csv(lineterminator='\n').encode('utf-8')
    if fmt != 'text':
        raise InvalidConfig("Unknown metrics format {}".format(fmt))
    correct = int(np.trace(m.confusion))
    lines = ['accuracy {:.4f} ({}/{})'.format(m.accuracy, correct,
        m.n_samples), 'rows: produced sign, columns: recognized sign',
        df.to_string(), '']
    return '\n'.join(lines).encode('utf-8')


def read_metrics_csv(source):
    '''Read a CSV written by ``render_metrics(m, 'csv')``.

    ``source`` is a file name or the CSV bytes.
    '''
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    df = pd.read_csv(source, index_col=0)
    if list(df.index) != list(df.columns):
        raise ClassMismatch("Row and column labels differ")
    return metrics_from_confusion(df.values, tuple(df.columns))


def plot_confusion(m, fname=None, show=False, dpi=100):
    '''Shaded confusion matrix, produced signs on the vertical axis.'''
    K = len(m.class_names)
    rows = m.confusion.sum(axis=1, keepdims=True)
    share = np.divide(m.confusion, rows, out=np.zeros(m.confusion.shape),
            where=rows > 0)

    fig = plt.figure(figsize=(1 + 0.7*K, 1 + 0.6*K))
    ax = fig.add_subplot(111)
    ax.imshow(share, cmap='Blues', vmin=0., vmax=1.)
    for i in range(K):
        for j in range(K):
            if m.confusion[i, j]:
                ax.text(j, i, str(m.confusion[i, j]), ha='center',
                        va='center',
                        color='white' if share[i, j] > 0.5 else 'black')
    ax.set_xticks(range(K))
    ax.set_xticklabels(m.class_names, rotation=45, ha='right')
    ax.set_yticks(range(K))
    ax.set_yticklabels(m.class_names)
    ax.set_xlabel('Recognized sign')
    ax.set_ylabel('Produced sign')
    ax.set_title('Accuracy {:.1%}'.format(m.accuracy))
    fig.tight_layout()

    if fname:
        fig.savefig(fname, dpi=dpi)
    if show:
        plt.show()
    plt.close(fig)


def _mean_features(ds, cfg):
    return np.array([encode_features(s, cfg).values.mean(axis=0) for s in ds])


def centroid_baseline(train, test, cfg=None):
    '''Nearest-centroid classifier over time-averaged features.

    A cheap separability check for a dataset: classes whose mean feature
    vectors overlap will score poorly here.
    '''
    if cfg is None:
        cfg = EncodingConfig()
    if len(train) == 0 or len(test) == 0:
        raise EmptyDataset("centroid_baseline needs train and test samples")
    class_names = tuple(sorted(set(train.labels), key=sign_code))
    index = {name: i for i, name in enumerate(class_names)}
    missing = set(test.labels) - set(index)
    if missing:
        raise ClassMismatch("Test labels {} are absent from training".format(
            ', '.join(sorted(missing))))

    Ftr = _mean_features(train, cfg)
    ytr = np.array([index[l] for l in train.labels])
    centroids = np.array([Ftr[ytr == k].mean(axis=0)
        for k in range(len(class_names))])
    Fte = _mean_features(test, cfg)
    dist = ((Fte[:, None, :] - centroids[None, :, :])**2).sum(axis=-1)
    y_true = np.array([index[l] for l in test.labels])
    return metrics_from_predictions(y_true, np.argmin(dist, axis=1),
            class_names)
