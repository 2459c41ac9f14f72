'''Mini-batch training with Adam and softmax cross-entropy.

Every epoch reshuffles the training set with a generator seeded by
``(shuffle seed, epoch)`` and every batch draws its dropout masks from
``(dropout seed, epoch, batch)``. A run therefore depends only on the data,
the initial network and ``TrainConfig.seed``, and a run resumed from a
checkpoint continues exactly where the interrupted one would have gone.
'''
import logging
import time
from dataclasses import dataclass, field, asdict
from typing import List, Optional

import numpy as np
import pandas as pd
import matplotlib.pyplot as plt

from aslchamp.checkpoint import TrainingState, save_checkpoint
from aslchamp.errors import (DivergenceDetected, EmptyDataset, InvalidConfig,
        NonFiniteValue, ShapeMismatch)
from aslchamp.general import child_seed, chunker
from aslchamp.gesture import GestureDataset, encode_dataset
from aslchamp.network import loss_and_grads
from aslchamp.nnops import AdamState, adam_step, check_finite, cross_entropy

logger = logging.getLogger(__name__)

FLAG_WINDOW = 10


@dataclass(frozen=True)
class TrainConfig:
    '''Training settings.

    epochs is the total number of epochs of the run; a resumed run stops at
    the same total. When no validation data is passed, a
    ``validation_fraction`` share of the training data is held out.
    '''
    epochs: int = 1000
    batch_size: int = 512
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    patience: Optional[int] = None
    validation_fraction: float = 0.1
    checkpoint_path: Optional[str] = None
    checkpoint_every: int = 1

    def validate(self):
        if self.epochs < 1:
            raise InvalidConfig("epochs must be >= 1, got {}".format(
                self.epochs))
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1, got {}".format(
                self.batch_size))
        if self.patience is not None and self.patience < 1:
            raise InvalidConfig("patience must be >= 1")
        if not 0. <= self.validation_fraction < 1.:
            raise InvalidConfig("validation_fraction must lie in [0, 1)")
        if self.checkpoint_every < 1:
            raise InvalidConfig("checkpoint_every must be >= 1")
        return self

    def to_dict(self):
        '''Settings that shape the run, without the checkpoint location.'''
        d = asdict(self)
        del d['checkpoint_path']
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class TrainingReport:
    '''Per-epoch training history.

    Epochs are numbered from 1. ``seconds`` is NaN for epochs restored from
    a checkpoint.
    '''
    train_loss: List[float] = field(default_factory=list)
    train_acc: List[float] = field(default_factory=list)
    val_loss: List[Optional[float]] = field(default_factory=list)
    val_acc: List[Optional[float]] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    checksum: str = ''
    stopped_early: bool = False

    @property
    def epochs(self):
        return len(self.train_loss)

    def append(self, train_loss, train_acc, val_loss, val_acc, seconds):
        self.train_loss.append(float(train_loss))
        self.train_acc.append(float(train_acc))
        self.val_loss.append(None if val_loss is None else float(val_loss))
        self.val_acc.append(None if val_acc is None else float(val_acc))
        self.seconds.append(float(seconds))

    def history(self):
        '''JSON-ready history without wall-clock times.'''
        return {
            'train_loss': list(self.train_loss),
            'train_acc': list(self.train_acc),
            'val_loss': list(self.val_loss),
            'val_acc': list(self.val_acc),
        }

    @classmethod
    def from_history(cls, history):
        n = len(history.get('train_loss', []))
        return cls(train_loss=list(history.get('train_loss', [])),
                train_acc=list(history.get('train_acc', [])),
                val_loss=list(history.get('val_loss', [None]*n)),
                val_acc=list(history.get('val_acc', [None]*n)),
                seconds=[float('nan')]*n)

    def flagged_windows(self, window=FLAG_WINDOW):
        '''``(start, end)`` epoch pairs after epoch ``window`` where the
        training loss at ``end`` exceeds the loss at ``start``.'''
        loss = self.train_loss
        flagged = []
        for end in range(2*window, len(loss) + 1):
            start = end - window
            if loss[end - 1] > loss[start - 1]:
                flagged.append((start, end))
        return flagged

    def to_frame(self, wall_clock=True):
        df = pd.DataFrame({
            'train_loss': self.train_loss,
            'train_acc': self.train_acc,
            'val_loss': pd.Series(self.val_loss, dtype=float),
            'val_acc': pd.Series(self.val_acc, dtype=float),
        }, index=pd.RangeIndex(1, self.epochs + 1, name='epoch'))
        if wall_clock:
            df['seconds'] = self.seconds
        return df

    def write(self, fname, wall_clock=True):
        '''Write the report as CSV. Without wall-clock times the file is a
        pure function of the run's inputs.'''
        self.to_frame(wall_clock).to_csv(fname)
        logger.info("Writing: training report %s", fname)


def _arrays(net, data):
    if data is None:
        return None
    if isinstance(data, GestureDataset):
        X, y, _ = encode_dataset(data, net.class_names, net.encoding,
                net.t_max)
        return X, y
    X, y = data
    X = np.asarray(X, dtype=net.config.dtype)
    y = np.asarray(y, dtype=int)
    if len(X) != len(y):
        raise ShapeMismatch("{} inputs but {} labels".format(len(X), len(y)))
    return check_finite(X, 'Training input'), y


def holdout(X, y, fraction, seed):
    '''Split off a seeded ``fraction`` of ``(X, y)`` for validation.'''
    n_val = int(round(fraction*len(X)))
    n_val = min(n_val, len(X) - 1)
    if n_val < 1:
        return (X, y), None
    order = np.random.default_rng(child_seed(seed, 'split')).permutation(
            len(X))
    val, tr = np.sort(order[:n_val]), np.sort(order[n_val:])
    return (X[tr], y[tr]), (X[val], y[val])


def _all_finite(net):
    return all(np.isfinite(p).all() for p in net.params.values())


def train(net, train_data, val_data=None, tc=None, state=None, split=None,
        threads=1):
    '''Train ``net`` in place.

    Parameters
    ----------
    net : ChampNet

    train_data, val_data : GestureDataset or (X, y)
        Datasets are encoded with the network's encoding.

    tc : TrainConfig

    state : TrainingState, optional
        Resume from this state (epoch counter, history, Adam moments,
        early-stopping counters).

    split : dict, optional
        Split description stored in the checkpoints.

    threads : int
        Worker threads for validation inference.

    Returns
    -------
    net, TrainingReport

    Raises
    ------
    EmptyDataset
        If there is no training data.

    NonFiniteValue
        If the training inputs hold NaN or Inf.

    DivergenceDetected
        If the loss, the network outputs or the parameters become NaN or
        infinite. The exception's ``net`` is the network after the last
        finite epoch.
    '''
    if tc is None:
        tc = TrainConfig()
    tc.validate()
    train_arr = _arrays(net, train_data)
    if train_arr is None or len(train_arr[0]) == 0:
        raise EmptyDataset("No training samples")
    val_arr = _arrays(net, val_data)
    if val_arr is None and tc.validation_fraction > 0:
        train_arr, val_arr = holdout(*train_arr, tc.validation_fraction,
                tc.seed)
    if val_arr is not None and len(val_arr[0]) == 0:
        val_arr = None
    X, y = train_arr
    N = len(X)

    if state is None:
        state = TrainingState()
    report = TrainingReport.from_history(state.history)
    adam = state.adam
    if adam is None:
        adam = AdamState(alpha=tc.alpha, beta1=tc.beta1, beta2=tc.beta2,
                epsilon=tc.epsilon)
    shuffle_seed = child_seed(tc.seed, 'shuffle')
    dropout_seed = child_seed(tc.seed, 'dropout')

    best_val = np.inf if state.best_val is None else state.best_val
    stale = state.stale
    if state.epoch:
        logger.info("Training: resuming after epoch %d", state.epoch)
    logger.info("Training: %d samples, %d validation, epochs %d-%d",
            N, 0 if val_arr is None else len(val_arr[0]), state.epoch + 1,
            tc.epochs)

    for epoch in range(state.epoch + 1, tc.epochs + 1):
        t0 = time.perf_counter()
        good = net.copy()
        order = np.random.default_rng([shuffle_seed, epoch]).permutation(N)
        total_loss = 0.
        correct = 0
        for b, idx in enumerate(chunker(order, tc.batch_size)):
            rng = np.random.default_rng([dropout_seed, epoch, b])
            try:
                loss, grads, probs = loss_and_grads(net, X[idx], y[idx],
                        'train', rng)
            except NonFiniteValue as exc:
                raise DivergenceDetected("{} in epoch {}".format(exc, epoch),
                        net=good, epoch=epoch)
            if not np.isfinite(loss):
                raise DivergenceDetected("Loss became {} in epoch {}".format(
                    loss, epoch), net=good, epoch=epoch)
            total_loss += loss*len(idx)
            correct += int(np.sum(np.argmax(probs, axis=1) == y[idx]))
            adam_step(net.params, grads, adam)
            logger.debug("Training: epoch %d batch %d loss %.6f", epoch, b,
                    loss)
        if not _all_finite(net):
            raise DivergenceDetected("Parameters became non-finite in epoch "
                    "{}".format(epoch), net=good, epoch=epoch)

        val_loss = val_acc = None
        if val_arr is not None:
            try:
                vprobs = net.predict_proba(val_arr[0], tc.batch_size,
                        threads)
            except NonFiniteValue as exc:
                raise DivergenceDetected("{} in epoch {}".format(exc, epoch),
                        net=good, epoch=epoch)
            val_loss = cross_entropy(vprobs, val_arr[1])
            val_acc = float(np.mean(np.argmax(vprobs, axis=1) == val_arr[1]))
        report.append(total_loss/N, correct/N, val_loss, val_acc,
                time.perf_counter() - t0)
        logger.info("Training: epoch %d/%d loss %.4f acc %.4f%s", epoch,
                tc.epochs, total_loss/N, correct/N,
                '' if val_loss is None else
                ' val_loss {:.4f} val_acc {:.4f}'.format(val_loss, val_acc))

        stop = False
        if tc.patience is not None and val_loss is not None:
            if val_loss < best_val:
                best_val = val_loss
                stale = 0
            else:
                stale += 1
                stop = stale >= tc.patience

        state = TrainingState(epoch=epoch, history=report.history(),
                adam=adam, train_config=tc.to_dict(),
                best_val=None if np.isinf(best_val) else float(best_val),
                stale=stale)
        if tc.checkpoint_path and (epoch % tc.checkpoint_every == 0
                or epoch == tc.epochs or stop):
            save_checkpoint(net, tc.checkpoint_path, state, split)

        if stop:
            logger.info("Training: stopping early after epoch %d", epoch)
            report.stopped_early = True
            break

    report.checksum = net.checksum()
    for start, end in report.flagged_windows():
        logger.warning("Training: loss rose between epochs %d and %d",
                start, end)
    return net, report


def plot_training(report, fname=None, show=False, dpi=100):
    '''Loss and accuracy curves, train and validation.'''
    df = report.to_frame(wall_clock=False)
    fig = plt.figure(figsize=(8, 4))
    ax = fig.add_subplot(121)
    ax.plot(df.index, df.train_loss, label='train')
    if df.val_loss.notna().any():
        ax.plot(df.index, df.val_loss, label='validation')
    ax.set_xlabel('Epoch')
    ax.set_ylabel('Loss')
    ax.legend()

    ax = fig.add_subplot(122)
    ax.plot(df.index, df.train_acc, label='train')
    if df.val_acc.notna().any():
        ax.plot(df.index, df.val_acc, label='validation')
    ax.set_xlabel('Epoch')
    ax.set_ylabel('Accuracy')
    ax.set_ylim(0, 1.02)
    fig.tight_layout()

    if fname:
        fig.savefig(fname, dpi=dpi)
    if show:
        plt.show()
    plt.close(fig)
