'''Line-delimited record files.

Every aslchamp text file has the same shape: a one-line JSON header that
carries a magic string and a schema version, followed by one JSON record
per line, UTF-8. Floats are written with Python's shortest round-trip
representation, so reading a file back reproduces every value bit for bit.

Magic strings in use:

* ``ASLCHAMP-DS`` - gesture datasets (this module)
* ``ASLCHAMP-TPL`` - sign template libraries (``aslchamp.templates``)
* ``ASLCHAMP-LESSON`` - lesson transcripts (``aslchamp.lesson``)
'''
import json
import logging

import numpy as np

from aslchamp.errors import FormatError, SchemaError
from aslchamp.gesture import (GestureSample, GestureDataset, N_JOINTS,
        SCHEMA_VERSION, validate_sample)

logger = logging.getLogger(__name__)

DATASET_MAGIC = 'ASLCHAMP-DS'


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(',', ':'),
            allow_nan=False)


def write_records(path, magic, records, version=SCHEMA_VERSION, **header):
    '''Write a header line plus one line per record.

    Parameters
    ----------
    path : str
        Output file name.

    magic : str
        Magic string stored in the header.

    records : iterable of dict
        JSON-serializable records.

    version : int
        Schema version stored in the header.

    header : keyword arguments
        Additional header fields.
    '''
    head = dict(header)
    head['magic'] = magic
    head['schema_version'] = version
    count = 0
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(_dumps(head) + '\n')
        for record in records:
            f.write(_dumps(record) + '\n')
            count += 1
    return count


def read_records(path, magic, versions=(SCHEMA_VERSION,)):
    '''Read a record file written by ``write_records``.

    Returns
    -------
    header : dict
    records : generator of (line number, dict)

    Raises
    ------
    FormatError
        Bad magic string, unsupported version or malformed JSON.
    '''
    f = open(path, 'r', encoding='utf-8')
    try:
        header = json.loads(f.readline())
    except ValueError:
        # UnicodeDecodeError is a ValueError too
        f.close()
        raise FormatError("{} does not start with a {} header".format(
            path, magic))
    if not isinstance(header, dict) or header.get('magic') != magic:
        f.close()
        raise FormatError("{}: bad magic, expected {}".format(path, magic))
    if header.get('schema_version') not in versions:
        f.close()
        raise FormatError("{}: unsupported schema version {}".format(
            path, header.get('schema_version')))
    return header, _record_lines(f, path)


def _record_lines(f, path):
    lineno = 1
    with f:
        try:
            for lineno, line in enumerate(f, start=2):
                if line.isspace():
                    continue
                yield lineno, json.loads(line)
        except ValueError:
            raise FormatError("{}:{}: malformed record".format(
                path, lineno))


def sample_to_record(sample):
    frames = []
    for t in range(sample.n_frames):
        frame = {'t': float(sample.timestamps[t])}
        for h, side in enumerate(('left', 'right')):
            if not sample.hand_present[t, h]:
                frame[side] = None
                continue
            n = sample.joint_counts[t, h]
            frame[side] = {
                'joints': sample.joints[t, h, :n].tolist(),
                'hand_rotation': sample.hand_rotation[t, h].tolist(),
            }
        frames.append(frame)
    return {
        'label': sample.label,
        'signer_id': sample.signer_id,
        'handedness': sample.handedness,
        'duration_s': sample.duration_s,
        'frames': frames,
    }


def record_to_sample(record):
    '''Rebuild a sample from a record; raises KeyError/TypeError if malformed.'''
    frames = record['frames']
    T = len(frames)
    n_joints = N_JOINTS
    for frame in frames:
        for side in ('left', 'right'):
            if frame.get(side) is not None:
                n_joints = max(n_joints, len(frame[side]['joints']))

    ts = np.zeros(T)
    joints = np.zeros((T, 2, n_joints, 6))
    hrot = np.zeros((T, 2, 3))
    present = np.zeros((T, 2), dtype=bool)
    counts = np.zeros((T, 2), dtype=int)
    for t, frame in enumerate(frames):
        ts[t] = frame['t']
        for h, side in enumerate(('left', 'right')):
            hand = frame.get(side)
            if hand is None:
                continue
            pj = np.array(hand['joints'], dtype=float).reshape(-1, 6)
            joints[t, h, :len(pj)] = pj
            hrot[t, h] = hand['hand_rotation']
            present[t, h] = True
            counts[t, h] = len(pj)

    return GestureSample(label=record['label'], timestamps=ts, joints=joints,
            hand_rotation=hrot, hand_present=present, joint_counts=counts,
            signer_id=record['signer_id'],
            handedness=record['handedness'],
            duration_s=record['duration_s'])


def write_dataset(ds, path):
    '''Write a ``GestureDataset`` as an ``ASLCHAMP-DS`` record file.

    Raises
    ------
    SchemaError
        If any sample fails validation.
    '''
    bad = ds.invalid_samples()
    if bad:
        idx, report = bad[0]
        raise SchemaError("Sample {} does not validate: {}".format(
            idx, report.summary()))
    logger.info("Writing: %d samples to %s", len(ds), path)
    return write_records(path, DATASET_MAGIC,
            (sample_to_record(s) for s in ds),
            version=ds.schema_version, provenance=ds.provenance,
            count=len(ds))


def read_dataset(path):
    '''Read an ``ASLCHAMP-DS`` file back into a ``GestureDataset``.

    Raises
    ------
    FormatError
        Bad magic, version, JSON or sample count.

    SchemaError
        A sample is malformed or fails validation.
    '''
    header, records = read_records(path, DATASET_MAGIC)
    samples = []
    for lineno, record in records:
        try:
            sample = record_to_sample(record)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise SchemaError("{}:{}: malformed sample ({})".format(
                path, lineno, exc))
        report = validate_sample(sample)
        if not report.ok:
            raise SchemaError("{}:{}: {}".format(path, lineno,
                report.summary()))
        samples.append(sample)

    count = header.get('count')
    if count is not None and count != len(samples):
        raise FormatError("{}: header declares {} samples, found {}".format(
            path, count, len(samples)))
    logger.info("Reading: %d samples from %s", len(samples), path)
    return GestureDataset(tuple(samples), header['schema_version'],
            header.get('provenance', ''))
