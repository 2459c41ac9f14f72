import matplotlib
import numpy as np
import pytest

import aslchamp.training
from aslchamp.gesture import GestureDataset, GestureSample, N_JOINTS
from aslchamp.network import NetConfig
from aslchamp.synth import DatasetSpec, SignerProfile, generate_dataset, \
        generate_sample
from aslchamp.templates import TemplateLibrary

matplotlib.use('Agg')

LIBRARY = TemplateLibrary()


def make_sample(label='COFFEE', n_frames=5, hands=(False, True), seed=0,
        handedness='right', signer_id='T01', rate=72.):
    '''Small random sample with valid timestamps.'''
    rng = np.random.default_rng(seed)
    joints = np.zeros((n_frames, 2, N_JOINTS, 6))
    joints[..., 0:3] = rng.normal(0., 0.1, (n_frames, 2, N_JOINTS, 3))
    joints[..., 3:6] = rng.uniform(-180., 180., (n_frames, 2, N_JOINTS, 3))
    hrot = rng.uniform(-180., 180., (n_frames, 2, 3))
    present = np.tile(np.array(hands, dtype=bool), (n_frames, 1))
    joints[~present] = 0.
    hrot[~present] = 0.
    return GestureSample(label=label, timestamps=np.arange(n_frames)/rate,
            joints=joints, hand_rotation=hrot, hand_present=present,
            signer_id=signer_id, handedness=handedness)


@pytest.fixture(scope='session')
def library():
    return LIBRARY


@pytest.fixture(scope='session')
def coffee(library):
    return generate_sample(library['COFFEE'],
            SignerProfile(orientation_jitter_deg=4., noise_std_m=0.003,
                seed=3, signer_id='S01'))


@pytest.fixture(scope='session')
def small_dataset(library):
    '''Two signs, six signers, two repetitions: 24 samples.'''
    spec = DatasetSpec(classes=('COFFEE', 'TEA'), signers=6,
            repetitions_per_class=2, master_seed=7)
    return generate_dataset(spec, library)


@pytest.fixture
def tiny_config():
    '''Network small enough to grad-check on raw arrays.'''
    return NetConfig(t_max=12, feature_dim=5, conv1_filters=4,
            conv2_filters=3, lstm1_units=3, lstm2_units=2,
            dense_units=(4, 3, 3), dropout_rate=0.5,
            class_names=('COFFEE', 'TEA', 'MILK'))


@pytest.fixture
def empty_dataset():
    return GestureDataset((), provenance='empty')


def nan_parameter_on_call(monkeypatch, call):
    '''Make the ``call``-th training batch see a NaN parameter.

    The first parameter of the network being trained is overwritten in
    place just before that batch's forward pass.
    '''
    real = aslchamp.training.loss_and_grads
    calls = []

    def loss_and_grads(net, X, y, mode='train', rng=None):
        calls.append(len(X))
        if len(calls) == call:
            name = next(iter(net.params))
            net.params[name] = np.full_like(net.params[name], np.nan)
        return real(net, X, y, mode, rng)

    monkeypatch.setattr(aslchamp.training, 'loss_and_grads', loss_and_grads)
    return calls
