'''Dual-hand joint trajectory data model.

A production of one sign is stored as a ``GestureSample``: a timed sequence
of frames, each holding 25 joints per hand (location in meters, rotation as
pitch/yaw/roll in degrees) plus a per-hand rotation. The sample keeps its
frames packed into numpy arrays; ``JointFrame`` objects are views built on
request.

Array layout of a sample with T frames::

    timestamps     (T,)
    joints         (T, 2, J, 6)   hand 0 = left, 1 = right;
                                  last axis = x, y, z, pitch, yaw, roll
    hand_rotation  (T, 2, 3)      pitch, yaw, roll
    hand_present   (T, 2)         bool
    joint_counts   (T, 2)         joint entries recorded per hand

J is normally 25. ``joint_counts`` keeps malformed frames representable so
that validation can report them.
'''
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Tuple

import numpy as np

from aslchamp.errors import (InvalidSample, InvalidConfig, NonFiniteValue,
        ClassMismatch)

N_JOINTS = 25
WRIST = 0
HANDS = ('left', 'right')
LEFT, RIGHT = 0, 1

# Per hand: 25 x (3 location + 3 rotation) + 3 hand rotation
HAND_FEATURES = N_JOINTS*6 + 3
FEATURE_DIM = 2*HAND_FEATURES
FRAME_RATE_HZ = 72.0
DURATION_S = 3.0
T_MAX = 651
SCHEMA_VERSION = 1

# Joint names in index order. 19-23 are the finger tips.
JOINT_NAMES = (
    'wrist_root', 'forearm_stub',
    'thumb0', 'thumb1', 'thumb2', 'thumb3',
    'index1', 'index2', 'index3',
    'middle1', 'middle2', 'middle3',
    'ring1', 'ring2', 'ring3',
    'pinky0', 'pinky1', 'pinky2', 'pinky3',
    'thumb_tip', 'index_tip', 'middle_tip', 'ring_tip', 'pinky_tip',
    'palm',
)


class SignClass(IntEnum):
    '''The nine vocabulary signs. Values are the one-hot class codes.'''
    COFFEE = 0
    TEA = 1
    MILK = 2
    WHIPPED_CREAM = 3
    MUFFIN = 4
    COOKIE = 5
    CUP = 6
    STRAW = 7
    MONEY = 8


CANONICAL_CLASSES = tuple(s.name for s in SignClass)

# Synthetic control classes, e.g. COFFEE_REVERSED. Codes continue after 8.
_CONTROL_CLASSES = {}


def register_control_class(name):
    '''Register a synthetic control class and return its code.

    Registering an existing name returns the existing code.
    '''
    name = str(name).upper()
    if name in SignClass.__members__:
        return int(SignClass[name])
    if name not in _CONTROL_CLASSES:
        _CONTROL_CLASSES[name] = len(SignClass) + len(_CONTROL_CLASSES)
    return _CONTROL_CLASSES[name]


def is_known_label(label):
    return label in SignClass.__members__ or label in _CONTROL_CLASSES


def sign_code(label):
    '''Stable integer code of a canonical or registered control label.'''
    if label in SignClass.__members__:
        return int(SignClass[label])
    try:
        return _CONTROL_CLASSES[label]
    except KeyError:
        raise ClassMismatch("Unknown sign label: {}".format(label))


@dataclass(frozen=True)
class HandPose:
    '''One hand in one frame.'''
    joints: np.ndarray
    hand_rotation: np.ndarray

    @property
    def locations(self):
        return self.joints[:, 0:3]

    @property
    def rotations(self):
        return self.joints[:, 3:6]


@dataclass(frozen=True)
class JointFrame:
    timestamp_s: float
    left: Optional[HandPose] = None
    right: Optional[HandPose] = None

    def hand(self, side):
        return self.left if side == 'left' else self.right

    @property
    def hand_present(self):
        return (self.left is not None, self.right is not None)


def _frozen(arr, dtype):
    arr = np.array(arr, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GestureSample:
    '''One labeled sign production.

    Parameters
    ----------
    label : str
        Sign class name, e.g. ``'COFFEE'``.

    timestamps, joints, hand_rotation, hand_present : array_like
        Packed frame data, see the module docstring.

    joint_counts : array_like, optional
        Joint entries recorded per frame and hand. Defaults to the joint
        axis length for present hands and 0 for absent ones.

    signer_id : str
        Opaque signer identifier.

    handedness : str
        ``'left'`` or ``'right'``.

    duration_s : float, optional
        Defaults to the last timestamp.
    '''
    label: str
    timestamps: np.ndarray
    joints: np.ndarray
    hand_rotation: np.ndarray
    hand_present: np.ndarray
    joint_counts: Optional[np.ndarray] = None
    signer_id: str = ''
    handedness: str = 'right'
    duration_s: Optional[float] = None

    def __post_init__(self):
        ts = _frozen(self.timestamps, float).reshape(-1)
        joints = _frozen(self.joints, float)
        present = _frozen(self.hand_present, bool)
        if self.joint_counts is None:
            # malformed joint arrays are left for validate_sample to report
            n_joints = joints.shape[2] if joints.ndim == 4 else 0
            counts = np.where(present, n_joints, 0)
        else:
            counts = self.joint_counts
        object.__setattr__(self, 'timestamps', ts)
        object.__setattr__(self, 'joints', joints)
        object.__setattr__(self, 'hand_rotation',
                _frozen(self.hand_rotation, float))
        object.__setattr__(self, 'hand_present', present)
        object.__setattr__(self, 'joint_counts', _frozen(counts, int))
        if self.duration_s is None:
            duration = float(ts[-1]) if ts.size else 0.0
            object.__setattr__(self, 'duration_s', duration)
        else:
            object.__setattr__(self, 'duration_s', float(self.duration_s))

    @classmethod
    def from_frames(cls, label, frames, signer_id='', handedness='right',
            duration_s=None):
        '''Pack a sequence of ``JointFrame`` objects into a sample.'''
        frames = list(frames)
        n_joints = N_JOINTS
        for frame in frames:
            for pose in (frame.left, frame.right):
                if pose is not None:
                    n_joints = max(n_joints, len(pose.joints))

        T = len(frames)
        ts = np.zeros(T)
        joints = np.zeros((T, 2, n_joints, 6))
        hrot = np.zeros((T, 2, 3))
        present = np.zeros((T, 2), dtype=bool)
        counts = np.zeros((T, 2), dtype=int)
        for t, frame in enumerate(frames):
            ts[t] = frame.timestamp_s
            for h, pose in enumerate((frame.left, frame.right)):
                if pose is None:
                    continue
                pj = np.asarray(pose.joints, dtype=float).reshape(-1, 6)
                joints[t, h, :len(pj)] = pj
                hrot[t, h] = pose.hand_rotation
                present[t, h] = True
                counts[t, h] = len(pj)

        return cls(label=label, timestamps=ts, joints=joints,
                hand_rotation=hrot, hand_present=present,
                joint_counts=counts, signer_id=signer_id,
                handedness=handedness, duration_s=duration_s)

    @property
    def n_frames(self):
        return self.timestamps.size

    @property
    def dominant_hand(self):
        return RIGHT if self.handedness == 'right' else LEFT

    def frame(self, idx):
        '''Return frame ``idx`` as a ``JointFrame``.'''
        poses = []
        for h in (LEFT, RIGHT):
            if not self.hand_present[idx, h]:
                poses.append(None)
                continue
            n = self.joint_counts[idx, h]
            poses.append(HandPose(self.joints[idx, h, :n],
                    self.hand_rotation[idx, h]))
        return JointFrame(float(self.timestamps[idx]), *poses)

    @property
    def frames(self):
        return tuple(self.frame(i) for i in range(self.n_frames))

    def replace(self, **kwargs):
        '''Copy of this sample with some fields replaced.'''
        fields = dict(label=self.label, timestamps=self.timestamps,
                joints=self.joints, hand_rotation=self.hand_rotation,
                hand_present=self.hand_present,
                joint_counts=self.joint_counts, signer_id=self.signer_id,
                handedness=self.handedness, duration_s=self.duration_s)
        if 'timestamps' in kwargs and 'duration_s' not in kwargs:
            fields['duration_s'] = None
        fields.update(kwargs)
        return GestureSample(**fields)

    def __eq__(self, other):
        if not isinstance(other, GestureSample):
            return NotImplemented
        return (self.label == other.label
                and self.signer_id == other.signer_id
                and self.handedness == other.handedness
                and self.duration_s == other.duration_s
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.joints, other.joints)
                and np.array_equal(self.hand_rotation, other.hand_rotation)
                and np.array_equal(self.hand_present, other.hand_present)
                and np.array_equal(self.joint_counts, other.joint_counts))

    __hash__ = None


@dataclass(frozen=True)
class Finding:
    field: str
    frame: Optional[int]
    rule: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: Tuple[Finding, ...] = ()

    @property
    def ok(self):
        return len(self.findings) == 0

    def __len__(self):
        return len(self.findings)

    def __iter__(self):
        return iter(self.findings)

    def rules(self):
        return [f.rule for f in self.findings]

    def summary(self, limit=5):
        lines = ['{} (frame {}): {}'.format(f.rule, f.frame, f.message)
                for f in self.findings[:limit]]
        if len(self.findings) > limit:
            lines.append('... {} more'.format(len(self.findings) - limit))
        return '; '.join(lines)


def validate_sample(sample):
    '''Check a sample against the frame schema.

    Validation never raises; every violated rule becomes a ``Finding`` that
    names the field, the frame index (or None) and the rule.

    Rules: ``label``, ``handedness``, ``non-empty``, ``shape``,
    ``joint-count``, ``monotonic-time``, ``finite-time``,
    ``finite-location``, ``finite-rotation``, ``duration``.
    '''
    findings = []

    if not is_known_label(sample.label):
        findings.append(Finding('label', None, 'label',
                'Unknown sign label {!r}'.format(sample.label)))
    if sample.handedness not in HANDS:
        findings.append(Finding('handedness', None, 'handedness',
                'Handedness must be left or right, got {!r}'.format(
                    sample.handedness)))

    T = sample.n_frames
    if T == 0:
        findings.append(Finding('frames', None, 'non-empty',
                'Sample has no frames'))
        return ValidationReport(tuple(findings))

    joints = sample.joints
    shapes_ok = (joints.ndim == 4 and joints.shape[:2] == (T, 2)
            and joints.shape[3] == 6
            and sample.hand_rotation.shape == (T, 2, 3)
            and sample.hand_present.shape == (T, 2)
            and sample.joint_counts.shape == (T, 2))
    if not shapes_ok:
        findings.append(Finding('frames', None, 'shape',
                'Inconsistent frame array shapes'))
        return ValidationReport(tuple(findings))

    present = sample.hand_present
    counts = sample.joint_counts
    bad_count = present & (counts != N_JOINTS)
    for t, h in zip(*np.nonzero(bad_count)):
        findings.append(Finding('{}.joints'.format(HANDS[h]), int(t),
                'joint-count', 'Expected {} joints, got {}'.format(
                    N_JOINTS, counts[t, h])))

    ts = sample.timestamps
    finite_ts = np.isfinite(ts)
    for t in np.nonzero(~finite_ts)[0]:
        findings.append(Finding('timestamp_s', int(t), 'finite-time',
                'Timestamp is not finite'))
    steps = np.diff(ts)
    for t in np.nonzero(~(steps > 0))[0]:
        if finite_ts[t] and finite_ts[t+1]:
            findings.append(Finding('timestamp_s', int(t+1),
                    'monotonic-time', 'Timestamp {} does not exceed {}'
                    .format(ts[t+1], ts[t])))

    # Only recorded joint slots of present hands are checked
    slot = np.arange(joints.shape[2])
    valid = present[:, :, None] & (slot[None, None, :] < counts[:, :, None])
    loc_bad = valid & ~np.isfinite(joints[..., 0:3]).all(axis=-1)
    rot_bad = valid & ~np.isfinite(joints[..., 3:6]).all(axis=-1)
    hrot_bad = present & ~np.isfinite(sample.hand_rotation).all(axis=-1)
    for t, h in zip(*np.nonzero(loc_bad.any(axis=-1))):
        findings.append(Finding('{}.joints.location'.format(HANDS[h]),
                int(t), 'finite-location', 'Non-finite joint location'))
    for t, h in zip(*np.nonzero(rot_bad.any(axis=-1) | hrot_bad)):
        findings.append(Finding('{}.rotation'.format(HANDS[h]), int(t),
                'finite-rotation', 'Non-finite rotation'))

    if finite_ts[-1] and not np.isclose(sample.duration_s, ts[-1],
            rtol=0., atol=1e-9):
        findings.append(Finding('duration_s', None, 'duration',
                'Duration {} differs from last timestamp {}'.format(
                    sample.duration_s, ts[-1])))

    return ValidationReport(tuple(findings))


def _require_valid(sample):
    report = validate_sample(sample)
    if not report.ok:
        raise InvalidSample("Invalid {} sample from signer {!r}: {}".format(
            sample.label, sample.signer_id, report.summary()), report)
    return report


@dataclass(frozen=True)
class EncodingConfig:
    '''How a sample is turned into a feature matrix.

    presence_flags : append one 0/1 column per hand (left, right) at the end.
    center : subtract the first-frame midpoint of the present wrists.
    rotation_scale : degrees mapped to 1.0.
    '''
    presence_flags: bool = False
    center: bool = True
    rotation_scale: float = 180.0
    dtype: str = 'float64'

    @property
    def feature_dim(self):
        return FEATURE_DIM + (2 if self.presence_flags else 0)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    '''T x D feature rows for the network; ``mask_len`` rows are real data.'''
    values: np.ndarray
    mask_len: int = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise InvalidConfig("FeatureMatrix must be 2-D, got shape {}"
                    .format(values.shape))
        if not np.isfinite(values).all():
            raise NonFiniteValue("FeatureMatrix contains NaN or Inf")
        object.__setattr__(self, 'values', values)
        mask_len = values.shape[0] if self.mask_len is None else self.mask_len
        if mask_len > values.shape[0]:
            raise InvalidConfig("mask_len {} exceeds {} rows".format(
                mask_len, values.shape[0]))
        object.__setattr__(self, 'mask_len', int(mask_len))

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


def wrap_degrees(angles):
    '''Map angles into [-180, 180]; values already in range are untouched.'''
    angles = np.asarray(angles, dtype=float)
    inside = (angles >= -180.) & (angles <= 180.)
    if inside.all():
        return angles
    return np.where(inside, angles, np.mod(angles + 180., 360.) - 180.)


def _wrist_center(sample):
    present = sample.hand_present
    rows = np.nonzero(present.any(axis=1))[0]
    if rows.size == 0:
        return np.zeros(3)
    t = rows[0]
    wrists = sample.joints[t, present[t], WRIST, 0:3]
    return wrists.mean(axis=0)


def encode_features(sample, cfg=None):
    '''Encode a sample into a T x D ``FeatureMatrix``.

    Row layout: left joints 0..24 as (x, y, z, pitch, yaw, roll), left hand
    rotation, then the right hand likewise; D = 306. With presence flags
    on, two 0/1 columns (left, right) follow, D = 308. Absent hands are
    zeros. Rotations are divided by ``cfg.rotation_scale``; locations are
    centered on the first-frame wrist midpoint.

    Raises
    ------
    InvalidSample
        If the sample does not validate.
    '''
    if cfg is None:
        cfg = EncodingConfig()
    _require_valid(sample)

    T = sample.n_frames
    present = sample.hand_present
    joints = sample.joints[:, :, :N_JOINTS, :]

    loc = joints[..., 0:3]
    if cfg.center:
        loc = loc - _wrist_center(sample)
    rot = wrap_degrees(joints[..., 3:6]) / cfg.rotation_scale
    hrot = wrap_degrees(sample.hand_rotation) / cfg.rotation_scale

    per_joint = np.concatenate([loc, rot], axis=-1).reshape(T, 2, -1)
    hands = np.concatenate([per_joint, hrot], axis=-1)
    hands = np.where(present[:, :, None], hands, 0.)
    values = hands.reshape(T, FEATURE_DIM)
    if cfg.presence_flags:
        values = np.concatenate([values, present.astype(float)], axis=1)

    return FeatureMatrix(values.astype(cfg.dtype), T)


def pad_or_truncate(m, t_max=T_MAX):
    '''Zero-pad or cut a feature matrix to exactly ``t_max`` rows.'''
    if t_max < 1:
        raise InvalidConfig("t_max must be >= 1, got {}".format(t_max))
    rows = m.rows
    if rows == t_max:
        return m
    if rows > t_max:
        return FeatureMatrix(m.values[:t_max].copy(), t_max)
    out = np.zeros((t_max, m.cols), dtype=m.values.dtype)
    out[:rows] = m.values
    return FeatureMatrix(out, m.mask_len)


# Columns negated by a sagittal-plane reflection: x, yaw, roll
_MIRROR_JOINT = np.array([-1., 1., 1., 1., -1., -1.])
_MIRROR_HAND = np.array([1., -1., -1.])


def mirror_handedness(sample):
    '''Reflect a production across the sagittal plane.

    The hands swap, x and yaw/roll change sign and the handedness flag
    flips. Applying it twice returns the original sample exactly.
    '''
    _require_valid(sample)
    return sample.replace(
        joints=sample.joints[:, ::-1] * _MIRROR_JOINT,
        hand_rotation=sample.hand_rotation[:, ::-1] * _MIRROR_HAND,
        hand_present=sample.hand_present[:, ::-1],
        joint_counts=sample.joint_counts[:, ::-1],
        handedness='left' if sample.handedness == 'right' else 'right',
    )


def time_reverse(sample):
    '''Play a production backwards; timestamps still start at zero.'''
    _require_valid(sample)
    return sample.replace(
        timestamps=sample.duration_s - sample.timestamps[::-1],
        joints=sample.joints[::-1],
        hand_rotation=sample.hand_rotation[::-1],
        hand_present=sample.hand_present[::-1],
        joint_counts=sample.joint_counts[::-1],
        duration_s=sample.duration_s,
    )


def wrist_path_area(sample, hand=None, axes=(0, 2)):
    '''Signed shoelace area of the projected wrist path of one hand.

    Parameters
    ----------
    hand : int, optional
        LEFT or RIGHT. Defaults to the dominant hand.

    axes : tuple of int
        Location axes spanning the projection plane. The default (x, z) is
        the horizontal plane; a positive area is a counter-clockwise path
        seen from above.
    '''
    if hand is None:
        hand = sample.dominant_hand
    rows = sample.hand_present[:, hand]
    pts = sample.joints[rows, hand, WRIST][:, list(axes)]
    if len(pts) < 3:
        return 0.
    x, y = pts[:, 0], pts[:, 1]
    return 0.5*float(np.sum(x*np.roll(y, -1) - np.roll(x, -1)*y))


@dataclass(frozen=True, eq=False)
class GestureDataset:
    '''An ordered collection of samples plus file metadata.'''
    samples: Tuple[GestureSample, ...] = ()
    schema_version: int = SCHEMA_VERSION
    provenance: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'samples', tuple(self.samples))

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, idx):
        return self.samples[idx]

    def __eq__(self, other):
        if not isinstance(other, GestureDataset):
            return NotImplemented
        return (self.schema_version == other.schema_version
                and self.provenance == other.provenance
                and self.samples == other.samples)

    __hash__ = None

    @property
    def labels(self):
        return [s.label for s in self.samples]

    @property
    def signers(self):
        return [s.signer_id for s in self.samples]

    def subset(self, indices, provenance=None):
        return GestureDataset(tuple(self.samples[i] for i in indices),
                self.schema_version,
                self.provenance if provenance is None else provenance)

    def invalid_samples(self):
        '''List of ``(index, ValidationReport)`` for failing samples.'''
        bad = []
        for idx, sample in enumerate(self.samples):
            report = validate_sample(sample)
            if not report.ok:
                bad.append((idx, report))
        return bad


def encode_dataset(ds, class_names=CANONICAL_CLASSES, cfg=None, t_max=T_MAX):
    '''Encode and pad every sample of a dataset.

    Returns
    -------
    X : ndarray (N, t_max, D)
    y : ndarray (N,) of int
        Position of each label in ``class_names``.
    mask_len : ndarray (N,) of int
    '''
    if cfg is None:
        cfg = EncodingConfig()
    index = {name: i for i, name in enumerate(class_names)}
    X = np.zeros((len(ds), t_max, cfg.feature_dim), dtype=cfg.dtype)
    y = np.zeros(len(ds), dtype=int)
    mask_len = np.zeros(len(ds), dtype=int)
    for n, sample in enumerate(ds):
        if sample.label not in index:
            raise ClassMismatch("Label {} is not one of {}".format(
                sample.label, ', '.join(class_names)))
        m = pad_or_truncate(encode_features(sample, cfg), t_max)
        X[n] = m.values
        y[n] = index[sample.label]
        mask_len[n] = m.mask_len
    return X, y, mask_len
