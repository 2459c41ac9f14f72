'''Binary network checkpoints.

File layout, all integers little-endian::

    b"ASLCHAMP-CKPT"            magic
    uint16                      format version
    uint32                      header length in bytes
    header                      UTF-8 JSON, sorted keys
    payload                     parameters in header order, then the Adam
                                first and second moments when present
    8 bytes                     BLAKE2b-64 digest of the payload

The header stores the network config, the init seed, the payload dtype,
every parameter name and shape, the parameter checksum, and optionally the
training state (epoch counter, loss history, optimizer settings,
early-stopping counters) and the dataset split used for training. Saving
the same state twice gives the same bytes.
'''
import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from aslchamp.errors import ChecksumMismatch, FormatError, VersionMismatch
from aslchamp.network import ChampNet, NetConfig
from aslchamp.nnops import AdamState

logger = logging.getLogger(__name__)

MAGIC = b'ASLCHAMP-CKPT'
CHECKPOINT_VERSION = 1
DIGEST_SIZE = 8
_PREFIX = struct.Struct('<HI')


@dataclass
class TrainingState:
    '''Where a training run stands; enough to resume it exactly.'''
    epoch: int = 0
    history: dict = field(default_factory=dict)
    adam: Optional[AdamState] = None
    train_config: dict = field(default_factory=dict)
    best_val: Optional[float] = None
    stale: int = 0


@dataclass
class Checkpoint:
    net: ChampNet
    training: Optional[TrainingState] = None
    split: Optional[dict] = None
    header: dict = field(default_factory=dict)


def _digest(payload):
    return hashlib.blake2b(payload, digest_size=DIGEST_SIZE).digest()


def _le(arr, dtype):
    return np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder('<'))


def checkpoint_bytes(net, training=None, split=None):
    '''Serialize a network (and optional training state) to bytes.'''
    cfg = net.config
    names = list(net.params)
    header = {
        'config': cfg.to_dict(),
        'seed': net.seed,
        'dtype': np.dtype(cfg.dtype).newbyteorder('<').str,
        'params': [[name, list(net.params[name].shape)] for name in names],
        'param_checksum': net.checksum(),
        'split': split,
        'training': None,
    }
    chunks = [net.payload()]
    if training is not None:
        adam = training.adam
        moments = adam is not None and all(n in adam.m for n in names)
        header['training'] = {
            'epoch': training.epoch,
            'history': training.history,
            'train_config': training.train_config,
            'best_val': training.best_val,
            'stale': training.stale,
            'adam': None if adam is None else {
                't': adam.t, 'alpha': adam.alpha, 'beta1': adam.beta1,
                'beta2': adam.beta2, 'epsilon': adam.epsilon,
                'moments': moments,
            },
        }
        if moments:
            chunks.extend(_le(adam.m[n], cfg.dtype).tobytes() for n in names)
            chunks.extend(_le(adam.v[n], cfg.dtype).tobytes() for n in names)

    head = json.dumps(header, sort_keys=True, separators=(',', ':'),
            allow_nan=False).encode('utf-8')
    payload = b''.join(chunks)
    return b''.join([MAGIC, _PREFIX.pack(CHECKPOINT_VERSION, len(head)),
        head, payload, _digest(payload)])


def save_checkpoint(net, path, training=None, split=None):
    '''Write a checkpoint; the file at ``path`` is replaced atomically.'''
    data = checkpoint_bytes(net, training, split)
    tmp = path + '.tmp'
    with open(tmp, 'wb') as f:
        f.write(data)
    os.replace(tmp, path)
    logger.info("Saving: checkpoint %s (%d bytes)", path, len(data))
    return path


def parse_checkpoint(data, source='<bytes>'):
    '''Rebuild a ``Checkpoint`` from bytes.

    Raises
    ------
    FormatError
        Not a checkpoint, or the header is malformed.

    VersionMismatch
        Unsupported format version.

    ChecksumMismatch
        Truncated file or a payload that fails the digest.
    '''
    if not data.startswith(MAGIC):
        if len(data) < len(MAGIC) and MAGIC.startswith(data):
            raise ChecksumMismatch("{} is truncated".format(source))
        raise FormatError("{} is not an aslchamp checkpoint".format(source))
    pos = len(MAGIC)
    if len(data) < pos + _PREFIX.size:
        raise ChecksumMismatch("{} is truncated".format(source))
    version, head_len = _PREFIX.unpack_from(data, pos)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch("{}: checkpoint version {} is not supported "
                "(expected {})".format(source, version, CHECKPOINT_VERSION))
    pos += _PREFIX.size
    if len(data) < pos + head_len:
        raise ChecksumMismatch("{} is truncated".format(source))
    try:
        header = json.loads(data[pos:pos + head_len].decode('utf-8'))
        cfg = NetConfig.from_dict(header['config'])
        shapes = [(name, tuple(shape)) for name, shape in header['params']]
        dtype = np.dtype(header['dtype'])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError("{}: malformed checkpoint header ({})".format(
            source, exc))
    pos += head_len

    training = header.get('training')
    adam_info = training.get('adam') if training else None
    n_values = sum(int(np.prod(s, dtype=int)) for _, s in shapes)
    n_sets = 3 if adam_info and adam_info.get('moments') else 1
    size = n_sets*n_values*dtype.itemsize
    if len(data) != pos + size + DIGEST_SIZE:
        raise ChecksumMismatch("{}: expected {} payload bytes, file is "
                "truncated or padded".format(source, size))
    payload = data[pos:pos + size]
    if _digest(payload) != data[pos + size:]:
        raise ChecksumMismatch("{}: payload checksum mismatch".format(source))

    flat = np.frombuffer(payload, dtype=dtype)
    sets = []
    offset = 0
    for _ in range(n_sets):
        arrays = {}
        for name, shape in shapes:
            n = int(np.prod(shape, dtype=int))
            arrays[name] = flat[offset:offset + n].reshape(shape).astype(
                    cfg.dtype)
            offset += n
        sets.append(arrays)

    net = ChampNet(cfg, sets[0], header.get('seed'))
    if net.checksum() != header.get('param_checksum'):
        raise ChecksumMismatch("{}: parameter checksum mismatch".format(
            source))

    state = None
    if training:
        adam = None
        if adam_info:
            adam = AdamState(t=adam_info['t'], alpha=adam_info['alpha'],
                    beta1=adam_info['beta1'], beta2=adam_info['beta2'],
                    epsilon=adam_info['epsilon'])
            if n_sets == 3:
                adam.m, adam.v = sets[1], sets[2]
        state = TrainingState(epoch=training['epoch'],
                history=training.get('history', {}), adam=adam,
                train_config=training.get('train_config', {}),
                best_val=training.get('best_val'),
                stale=training.get('stale', 0))
    return Checkpoint(net, state, header.get('split'), header)


def read_checkpoint(path):
    '''Read a checkpoint file, training state included.'''
    with open(path, 'rb') as f:
        data = f.read()
    ckpt = parse_checkpoint(data, path)
    logger.info("Loading: checkpoint %s (%r)", path, ckpt.net)
    return ckpt


def load_checkpoint(path):
    '''Read the network stored in a checkpoint file.'''
    return read_checkpoint(path).net
