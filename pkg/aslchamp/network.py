'''The sign classifier: two convolution blocks, two LSTM layers and a dense
head.

Layer pipeline for an input of t_max x feature_dim::

    conv(conv1_filters, k) -> tanh -> maxpool(pool)
    conv(conv2_filters, k) -> tanh -> maxpool(pool)
    lstm(lstm1_units) -> lstm(lstm2_units)          every time step kept
    flatten
    dense(dense_units[0], tanh) -> dropout
    dense(dense_units[1], tanh) -> dropout
    dense(dense_units[2], tanh) -> dropout
    dense(n_classes) -> softmax

All widths are multiplied by ``scale_factor`` (rounded down) so the same
architecture can be trained at desk scale. Parameters live in one ordered
dict keyed ``'<layer>.<name>'``, e.g. ``'conv1.kernels'``,
``'lstm2.W_hf'``, ``'output.b'``.
'''
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Tuple

import numpy as np

from aslchamp.errors import InvalidConfig, ShapeMismatch
from aslchamp.general import chunker
from aslchamp.gesture import (CANONICAL_CLASSES, FEATURE_DIM, T_MAX,
        EncodingConfig, FeatureMatrix, encode_features, pad_or_truncate)
from aslchamp.nnops import (conv1d_forward, conv1d_backward, maxpool1d,
        maxpool1d_backward, tanh_op, tanh_backward, lstm_sequence,
        lstm_sequence_backward, LSTMCellParams, lstm_params, dense,
        dense_backward, dropout_mask, softmax, cross_entropy,
        softmax_cross_entropy_backward, glorot_uniform, check_finite)

logger = logging.getLogger(__name__)

DENSE_LAYERS = ('dense1', 'dense2', 'dense3')
LSTM_LAYERS = ('lstm1', 'lstm2')


@dataclass(frozen=True)
class NetConfig:
    '''Architecture of a ChampNet.

    The defaults are the full-size widths. ``scale_factor`` is a
    rational in (0, 1]; strings such as ``'1/32'`` are accepted.
    '''
    t_max: int = T_MAX
    feature_dim: int = FEATURE_DIM
    conv1_filters: int = 512
    conv2_filters: int = 256
    kernel_size: int = 3
    pool: int = 2
    lstm1_units: int = 512
    lstm2_units: int = 256
    dense_units: Tuple[int, int, int] = (512, 256, 128)
    dropout_rate: float = 0.6
    class_names: Tuple[str, ...] = CANONICAL_CLASSES
    scale_factor: Fraction = field(default=Fraction(1))
    presence_flags: bool = False
    dtype: str = 'float64'

    def __post_init__(self):
        try:
            scale = Fraction(self.scale_factor)
        except (TypeError, ValueError, ZeroDivisionError):
            raise InvalidConfig("Bad scale_factor {!r}".format(
                self.scale_factor))
        object.__setattr__(self, 'scale_factor', scale)
        object.__setattr__(self, 'dense_units', tuple(self.dense_units))
        object.__setattr__(self, 'class_names', tuple(self.class_names))
        self.validate()

    def _scaled(self, width):
        out = int(width*self.scale_factor)
        if out < 1:
            raise InvalidConfig("Width {} scaled by {} is below 1".format(
                width, self.scale_factor))
        return out

    def validate(self):
        if not 0 < self.scale_factor <= 1:
            raise InvalidConfig("scale_factor must lie in (0, 1], got {}"
                    .format(self.scale_factor))
        widths = (self.conv1_filters, self.conv2_filters, self.lstm1_units,
                self.lstm2_units) + self.dense_units
        if len(self.dense_units) != 3:
            raise InvalidConfig("dense_units needs three widths")
        if min(widths + (self.t_max, self.feature_dim, self.kernel_size,
                self.pool)) < 1:
            raise InvalidConfig("All sizes must be positive")
        if len(self.class_names) < 2:
            raise InvalidConfig("Need at least two classes")
        if len(set(self.class_names)) != len(self.class_names):
            raise InvalidConfig("Duplicate class names")
        if not 0. <= self.dropout_rate < 1.:
            raise InvalidConfig("dropout_rate must lie in [0, 1)")
        if self.dtype not in ('float32', 'float64'):
            raise InvalidConfig("dtype must be float32 or float64")
        for w in widths:
            self._scaled(w)
        if self.sequence_lengths[-1] < 1:
            raise InvalidConfig("t_max {} is too short for the conv/pool "
                    "stack".format(self.t_max))
        return self

    @property
    def n_classes(self):
        return len(self.class_names)

    @property
    def conv_widths(self):
        return (self._scaled(self.conv1_filters),
                self._scaled(self.conv2_filters))

    @property
    def lstm_widths(self):
        return (self._scaled(self.lstm1_units), self._scaled(self.lstm2_units))

    @property
    def dense_widths(self):
        return tuple(self._scaled(w) for w in self.dense_units)

    @property
    def sequence_lengths(self):
        '''Time length after conv1, pool1, conv2 and pool2.'''
        k, p = self.kernel_size, self.pool
        c1 = self.t_max - k + 1
        p1 = (c1 - p)//p + 1 if c1 >= p else 0
        c2 = p1 - k + 1
        p2 = (c2 - p)//p + 1 if c2 >= p else 0
        return (c1, p1, c2, p2)

    @property
    def encoding(self):
        return EncodingConfig(presence_flags=self.presence_flags,
                dtype=self.dtype)

    def to_dict(self):
        return {
            't_max': self.t_max,
            'feature_dim': self.feature_dim,
            'conv1_filters': self.conv1_filters,
            'conv2_filters': self.conv2_filters,
            'kernel_size': self.kernel_size,
            'pool': self.pool,
            'lstm1_units': self.lstm1_units,
            'lstm2_units': self.lstm2_units,
            'dense_units': list(self.dense_units),
            'dropout_rate': self.dropout_rate,
            'class_names': list(self.class_names),
            'scale_factor': str(self.scale_factor),
            'presence_flags': self.presence_flags,
            'dtype': self.dtype,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def param_shapes(cfg):
    '''Ordered ``{name: shape}`` of every parameter of a config.'''
    shapes = {}
    k, D = cfg.kernel_size, cfg.feature_dim
    f1, f2 = cfg.conv_widths
    shapes['conv1.kernels'] = (f1, k, D)
    shapes['conv1.bias'] = (f1,)
    shapes['conv2.kernels'] = (f2, k, f1)
    shapes['conv2.bias'] = (f2,)
    d_in = f2
    for layer, H in zip(LSTM_LAYERS, cfg.lstm_widths):
        for gate in 'ifgo':
            shapes['{}.W_i{}'.format(layer, gate)] = (H, d_in)
            shapes['{}.W_h{}'.format(layer, gate)] = (H, H)
        for gate in 'ifgo':
            shapes['{}.b_i{}'.format(layer, gate)] = (H,)
            shapes['{}.b_h{}'.format(layer, gate)] = (H,)
        d_in = H
    d_in = cfg.sequence_lengths[-1]*cfg.lstm_widths[-1]
    for layer, width in zip(DENSE_LAYERS, cfg.dense_widths):
        shapes[layer + '.W'] = (d_in, width)
        shapes[layer + '.b'] = (width,)
        d_in = width
    shapes['output.W'] = (d_in, cfg.n_classes)
    shapes['output.b'] = (cfg.n_classes,)
    return shapes


@dataclass(frozen=True)
class Prediction:
    label: str
    confidence: float
    distribution: Tuple[float, ...]
    class_names: Tuple[str, ...]

    def as_dict(self):
        return dict(zip(self.class_names, self.distribution))


class ChampNet(object):
    '''A configured network and its parameters.

    Parameters
    ----------
    config : NetConfig

    params : dict
        ``{name: ndarray}`` in ``param_shapes(config)`` order.

    seed : int, optional
        Seed used to initialize the parameters.
    '''
    def __init__(self, config, params, seed=None):
        self.config = config
        self.seed = seed
        shapes = param_shapes(config)
        if list(params) != list(shapes):
            raise ShapeMismatch("Parameter names do not match the config")
        self.params = {}
        for name, shape in shapes.items():
            arr = np.asarray(params[name], dtype=config.dtype)
            if arr.shape != shape:
                raise ShapeMismatch("{} has shape {}, expected {}".format(
                    name, arr.shape, shape))
            self.params[name] = arr

    @property
    def class_names(self):
        return self.config.class_names

    @property
    def t_max(self):
        return self.config.t_max

    @property
    def encoding(self):
        return self.config.encoding

    def copy(self):
        return ChampNet(self.config,
                {k: v.copy() for k, v in self.params.items()}, self.seed)

    def lstm(self, layer):
        prefix = layer + '.'
        return LSTMCellParams(**{name[len(prefix):]: arr
            for name, arr in self.params.items() if name.startswith(prefix)})

    def parameter_count(self):
        return int(sum(p.size for p in self.params.values()))

    def payload(self):
        '''Little-endian bytes of every parameter in order.'''
        dt = np.dtype(self.config.dtype).newbyteorder('<')
        return b''.join(np.ascontiguousarray(p, dtype=dt).tobytes()
                for p in self.params.values())

    def checksum(self):
        '''64-bit BLAKE2b digest of ``payload()`` as hex.'''
        return hashlib.blake2b(self.payload(), digest_size=8).hexdigest()

    def predict_proba(self, X, batch_size=64, threads=1):
        '''Inference-mode class probabilities for ``X (N, t_max, D)``.

        Batches may run on a thread pool; results keep the input order.
        '''
        X = np.asarray(X)
        if X.ndim == 2:
            X = X[None]
        if len(X) == 0:
            return np.zeros((0, self.config.n_classes))
        batches = [X[idx] for idx in chunker(np.arange(len(X)), batch_size)]

        def run(xb):
            return forward(self, xb, mode='infer')

        if threads > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(run, batches))
        else:
            parts = [run(xb) for xb in batches]
        return np.concatenate(parts)

    def __repr__(self):
        return 'ChampNet(scale={}, classes={}, params={})'.format(
            self.config.scale_factor, self.config.n_classes,
            self.parameter_count())


def build_network(cfg=None, seed=0):
    '''Initialize a network deterministically from ``seed``.

    Convolution and dense weights are Glorot-uniform, LSTM weights uniform
    in +/-sqrt(1/hidden) with forget-gate bias 1, all other biases zero.
    '''
    if cfg is None:
        cfg = NetConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    dt = cfg.dtype
    k = cfg.kernel_size
    params = {}

    d_in = cfg.feature_dim
    for n, f in enumerate(cfg.conv_widths, start=1):
        params['conv{}.kernels'.format(n)] = glorot_uniform(rng, (f, k, d_in),
                k*d_in, k*f, dt)
        params['conv{}.bias'.format(n)] = np.zeros(f, dtype=dt)
        d_in = f
    for layer, H in zip(LSTM_LAYERS, cfg.lstm_widths):
        lp = lstm_params(rng, d_in, H, dt)
        for name, arr in lp.as_dict().items():
            params['{}.{}'.format(layer, name)] = arr
        d_in = H
    d_in = cfg.sequence_lengths[-1]*cfg.lstm_widths[-1]
    for layer, width in zip(DENSE_LAYERS + ('output',),
            cfg.dense_widths + (cfg.n_classes,)):
        params[layer + '.W'] = glorot_uniform(rng, (d_in, width), d_in,
                width, dt)
        params[layer + '.b'] = np.zeros(width, dtype=dt)
        d_in = width

    # Reorder to the canonical layout
    params = {name: params[name] for name in param_shapes(cfg)}
    net = ChampNet(cfg, params, seed)
    logger.info("Building: %r", net)
    return net


def _as_batch(net, X):
    if isinstance(X, FeatureMatrix):
        X = X.values[None]
    elif isinstance(X, (list, tuple)) and X \
            and isinstance(X[0], FeatureMatrix):
        X = np.stack([m.values for m in X])
    X = np.asarray(X, dtype=net.config.dtype)
    if X.ndim == 2:
        X = X[None]
    cfg = net.config
    if X.ndim != 3 or X.shape[1:] != (cfg.t_max, cfg.feature_dim):
        raise ShapeMismatch("Input of shape {} does not match ({}, {})".format(
            X.shape, cfg.t_max, cfg.feature_dim))
    return check_finite(X, 'Network input')


def _forward(net, X, mode='infer', rng=None):
    if mode not in ('train', 'infer'):
        raise InvalidConfig("mode must be train or infer, got {}".format(mode))
    cfg = net.config
    p = net.params
    X = _as_batch(net, X)
    c = {'x0': X}

    x = X
    for n in (1, 2):
        z = conv1d_forward(x, p['conv{}.kernels'.format(n)],
                p['conv{}.bias'.format(n)])
        a = tanh_op(z)
        pooled, argmax = maxpool1d(a, cfg.pool, cfg.pool)
        c['conv{}_in'.format(n)] = x
        c['conv{}_out'.format(n)] = a
        c['pool{}_argmax'.format(n)] = argmax
        x = pooled

    for layer in LSTM_LAYERS:
        hs, cache = lstm_sequence(x, net.lstm(layer))
        c[layer] = cache
        x = hs

    c['lstm_shape'] = x.shape
    x = x.reshape(len(X), -1)
    train = mode == 'train' and cfg.dropout_rate > 0
    if train and rng is None:
        rng = np.random.default_rng()
    for layer in DENSE_LAYERS:
        c[layer + '_in'] = x
        out = dense(x, p[layer + '.W'], p[layer + '.b'], activate=True)
        c[layer + '_out'] = out
        if train:
            mask = dropout_mask(out.shape, cfg.dropout_rate, rng, out.dtype)
            c[layer + '_mask'] = mask
            out = out*mask
        x = out
    c['output_in'] = x
    logits = dense(x, p['output.W'], p['output.b'])
    probs = check_finite(softmax(logits), 'Network output')
    return probs, c


def forward(net, X, mode='infer', rng=None):
    '''Class probabilities ``(B, n_classes)`` for a batch.

    Parameters
    ----------
    X : ndarray (B, t_max, feature_dim), FeatureMatrix or list of them

    mode : {'train', 'infer'}
        Dropout is active only in train mode.

    rng : numpy.random.Generator, optional
        Dropout random state.

    Raises
    ------
    ShapeMismatch, NonFiniteValue
    '''
    return _forward(net, X, mode, rng)[0]


def loss_and_grads(net, X, y, mode='train', rng=None):
    '''Mean cross-entropy over a batch and its gradient for every parameter.

    Returns
    -------
    loss : float
    grads : dict, same keys as ``net.params``
    probs : ndarray (B, n_classes)
    '''
    cfg = net.config
    p = net.params
    probs, c = _forward(net, X, mode, rng)
    loss = cross_entropy(probs, y)
    grads = {}

    g = softmax_cross_entropy_backward(probs, y)
    g, grads['output.W'], grads['output.b'] = dense_backward(c['output_in'],
            p['output.W'], g)
    for layer in reversed(DENSE_LAYERS):
        if layer + '_mask' in c:
            g = g*c[layer + '_mask']
        g, grads[layer + '.W'], grads[layer + '.b'] = dense_backward(
                c[layer + '_in'], p[layer + '.W'], g, out=c[layer + '_out'])

    g = g.reshape(c['lstm_shape'])
    for layer in reversed(LSTM_LAYERS):
        g, _, _, lg = lstm_sequence_backward(g, c[layer], net.lstm(layer))
        for name, arr in lg.as_dict().items():
            grads['{}.{}'.format(layer, name)] = arr

    for n in (2, 1):
        a = c['conv{}_out'.format(n)]
        g = maxpool1d_backward(g, c['pool{}_argmax'.format(n)], a.shape)
        g = tanh_backward(a, g)
        g, grads['conv{}.kernels'.format(n)], grads['conv{}.bias'.format(n)] \
                = conv1d_backward(c['conv{}_in'.format(n)],
                        p['conv{}.kernels'.format(n)], g, input_grad=n > 1)

    grads = {name: grads[name].astype(cfg.dtype, copy=False)
            for name in p}
    return loss, grads, probs


def predict(net, sample):
    '''Recognize one sample.

    The sample is encoded with the network's encoding, padded or cut to
    t_max and run in inference mode. Ties go to the lowest class code.

    Raises
    ------
    InvalidSample
        If the sample does not validate.
    '''
    m = pad_or_truncate(encode_features(sample, net.encoding), net.t_max)
    probs = forward(net, m, mode='infer')[0]
    best = int(np.argmax(probs))
    return Prediction(label=net.class_names[best],
            confidence=float(probs[best]),
            distribution=tuple(float(v) for v in probs),
            class_names=net.class_names)
