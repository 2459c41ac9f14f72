import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import numpy.testing as npt
import pytest

from aslchamp.errors import InvalidConfig, InvalidSample, NonFiniteValue, \
        ShapeMismatch
from aslchamp.gesture import FeatureMatrix
from aslchamp.network import (NetConfig, build_network, forward,
        loss_and_grads, param_shapes, predict)
from aslchamp.nnops import cross_entropy, grad_check

from conftest import make_sample


def test_full_width_shapes():
    cfg = NetConfig()
    assert cfg.sequence_lengths == (649, 324, 322, 161)
    assert cfg.conv_widths == (512, 256)
    assert cfg.n_classes == 9
    shapes = param_shapes(cfg)
    assert list(shapes)[:4] == ['conv1.kernels', 'conv1.bias',
            'conv2.kernels', 'conv2.bias']
    assert shapes['conv1.kernels'] == (512, 3, 306)
    assert shapes['lstm1.W_ii'] == (512, 256)
    assert shapes['lstm2.W_hf'] == (256, 256)
    assert shapes['dense1.W'] == (161*256, 512)
    assert shapes['output.W'] == (128, 9)
    assert list(shapes)[-2:] == ['output.W', 'output.b']


def test_scaled_widths():
    cfg = NetConfig(scale_factor='1/32')
    assert cfg.scale_factor == Fraction(1, 32)
    assert cfg.conv_widths == (16, 8)
    assert cfg.lstm_widths == (16, 8)
    assert cfg.dense_widths == (16, 8, 4)
    assert NetConfig(scale_factor=Fraction(1, 64)).dense_widths == (8, 4, 2)


@pytest.mark.parametrize('kwargs', [
    {'scale_factor': '1/1024'},
    {'scale_factor': 0},
    {'scale_factor': 2},
    {'scale_factor': 'half'},
    {'dropout_rate': 1.0},
    {'class_names': ('COFFEE',)},
    {'class_names': ('COFFEE', 'COFFEE')},
    {'t_max': 6},
    {'dtype': 'float16'},
])
def test_bad_configs(kwargs):
    with pytest.raises(InvalidConfig):
        NetConfig(**kwargs)


def test_config_dict_round_trip():
    cfg = NetConfig(scale_factor='3/64', class_names=('TEA', 'MILK'),
            presence_flags=True, feature_dim=308)
    d = cfg.to_dict()
    assert d['scale_factor'] == '3/64'
    assert NetConfig.from_dict(d) == cfg


def test_build_is_deterministic(tiny_config):
    a = build_network(tiny_config, seed=5)
    b = build_network(tiny_config, seed=5)
    c = build_network(tiny_config, seed=6)
    assert a.checksum() == b.checksum()
    assert a.checksum() != c.checksum()
    assert list(a.params) == list(param_shapes(tiny_config))
    npt.assert_array_equal(a.params['lstm1.b_if'], 1.)
    npt.assert_array_equal(a.params['dense2.b'], 0.)
    assert a.parameter_count() == sum(int(np.prod(s))
            for s in param_shapes(tiny_config).values())


def test_forward_rows_sum_to_one(tiny_config):
    net = build_network(tiny_config, seed=1)
    X = np.random.default_rng(0).normal(size=(1000, 12, 5))
    probs = forward(net, X)
    assert probs.shape == (1000, 3)
    npt.assert_allclose(probs.sum(axis=1), 1., rtol=0., atol=1e-9)


def test_zero_output_layer_is_uniform():
    cfg = NetConfig(t_max=12, feature_dim=5, conv1_filters=2,
            conv2_filters=2, lstm1_units=2, lstm2_units=2,
            dense_units=(3, 3, 3))
    net = build_network(cfg, seed=0)
    net.params['output.W'][:] = 0.
    X = np.random.default_rng(1).normal(size=(7, 12, 5))
    probs = forward(net, X)
    npt.assert_array_equal(probs, np.full((7, 9), 1/9.))
    assert abs(cross_entropy(probs, np.arange(7)) - math.log(9)) < 1e-9


def test_forward_accepts_feature_matrices(tiny_config):
    net = build_network(tiny_config, seed=2)
    X = np.random.default_rng(3).normal(size=(2, 12, 5))
    batch = forward(net, X)
    single = forward(net, FeatureMatrix(X[1]))
    listed = forward(net, [FeatureMatrix(X[0]), FeatureMatrix(X[1])])
    npt.assert_allclose(single[0], batch[1], rtol=1e-12)
    npt.assert_allclose(listed, batch, rtol=1e-12)


def test_forward_input_errors(tiny_config):
    net = build_network(tiny_config, seed=2)
    with pytest.raises(ShapeMismatch):
        forward(net, np.zeros((1, 11, 5)))
    bad = np.zeros((1, 12, 5))
    bad[0, 3, 2] = np.nan
    with pytest.raises(NonFiniteValue):
        forward(net, bad)
    with pytest.raises(InvalidConfig):
        forward(net, np.zeros((1, 12, 5)), mode='eval')


def test_dropout_only_in_train_mode(tiny_config):
    net = build_network(tiny_config, seed=2)
    X = np.random.default_rng(3).normal(size=(4, 12, 5))
    infer = forward(net, X)
    npt.assert_array_equal(infer, forward(net, X, mode='infer'))
    a = forward(net, X, 'train', np.random.default_rng(9))
    b = forward(net, X, 'train', np.random.default_rng(9))
    npt.assert_array_equal(a, b)
    assert not np.allclose(a, infer)


def test_predict_proba_threads(tiny_config):
    net = build_network(tiny_config, seed=4)
    X = np.random.default_rng(5).normal(size=(40, 12, 5))
    one = net.predict_proba(X, batch_size=16, threads=1)
    two = net.predict_proba(X, batch_size=16, threads=3)
    npt.assert_array_equal(one, two)
    npt.assert_allclose(one, forward(net, X), rtol=1e-12)
    assert net.predict_proba(X[:0]).shape == (0, 3)


def _grad_error(net, X, y, mode, eps, coords=None):
    loss, grads, _ = loss_and_grads(net, X, y, mode, np.random.default_rng(8))

    def loss_fn(params):
        return loss_and_grads(net, X, y, mode, np.random.default_rng(8))[0]

    return grad_check(loss_fn, net.params, grads, eps=eps, coords=coords,
            rng=np.random.default_rng(0))


@pytest.mark.parametrize('mode', ['infer', 'train'])
@pytest.mark.parametrize('seed', range(3))
def test_network_gradients(tiny_config, mode, seed):
    # Pool width 1 keeps the loss smooth for the finite differences
    net = build_network(replace(tiny_config, pool=1), seed=seed)
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(3, 12, 5))
    y = rng.integers(0, 3, 3)
    assert _grad_error(net, X, y, mode, eps=1e-4) < 1e-5


def test_scaled_network_gradient():
    cfg = NetConfig(t_max=12, scale_factor='1/64',
            class_names=('COFFEE', 'TEA', 'MILK', 'CUP'))
    net = build_network(cfg, seed=11)
    rng = np.random.default_rng(12)
    X = rng.normal(0., 0.5, size=(2, 12, 306))
    y = np.array([1, 3])
    assert _grad_error(net, X, y, 'infer', eps=1e-5, coords=4) < 1e-3


def test_gradient_keys_and_dtypes(tiny_config):
    net = build_network(replace(tiny_config, dtype='float32'), seed=0)
    X = np.random.default_rng(0).normal(size=(2, 12, 5))
    loss, grads, probs = loss_and_grads(net, X, [0, 2], 'infer')
    assert list(grads) == list(net.params)
    assert all(g.dtype == np.float32 for g in grads.values())
    assert all(g.shape == net.params[k].shape for k, g in grads.items())
    assert np.isfinite(loss)


def test_predict_ties_go_to_lowest_code():
    cfg = NetConfig(t_max=30, conv1_filters=2, conv2_filters=2,
            lstm1_units=2, lstm2_units=2, dense_units=(2, 2, 2))
    net = build_network(cfg, seed=0)
    net.params['output.W'][:] = 0.
    sample = make_sample(n_frames=40, hands=(True, True))
    p = predict(net, sample)
    assert p.label == 'COFFEE'
    assert p.confidence == pytest.approx(1/9.)
    assert len(p.distribution) == 9
    assert abs(sum(p.distribution) - 1.) < 1e-9
    assert set(p.as_dict()) == set(cfg.class_names)


def test_predict_rejects_invalid_sample():
    cfg = NetConfig(t_max=30, conv1_filters=2, conv2_filters=2,
            lstm1_units=2, lstm2_units=2, dense_units=(2, 2, 2))
    net = build_network(cfg, seed=0)
    with pytest.raises(InvalidSample):
        predict(net, make_sample(label='ESPRESSO'))
