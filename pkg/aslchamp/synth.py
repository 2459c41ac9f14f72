'''Synthetic sign productions.

``generate_sample`` animates a ``SignTemplate`` for one signer profile:
the wrist follows the template path, the fingers follow the handshape
keyframes and the hand orientation follows the rotation keyframes. Signer
variability enters as a spatial offset, a palm-orientation bias plus
per-frame jitter, positional noise and a speed factor. Left-handed signers
are produced by mirroring the right-handed animation.

``generate_dataset`` builds a class-balanced dataset of signers x classes x
repetitions. Every sample draws from its own seed, derived from the master
seed and the sample's (signer, class, repetition) position, so the result
does not depend on generation order or thread count.
'''
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np
from scipy.interpolate import interp1d
from scipy.spatial.transform import Rotation

from aslchamp.errors import InvalidConfig, InvalidTemplate
from aslchamp.gesture import (GestureSample, GestureDataset, N_JOINTS,
        LEFT, RIGHT, CANONICAL_CLASSES, FRAME_RATE_HZ, DURATION_S,
        mirror_handedness, wrap_degrees, _require_valid)
from aslchamp.templates import TemplateLibrary, SignTemplate

logger = logging.getLogger(__name__)

MIN_DURATION_S = 1.0
MAX_DURATION_S = 6.0

# Hand-local skeleton of a right hand: wrist at the origin, fingers along +y,
# palm facing +z, thumb toward -x.
_SEGMENTS = np.array([0.040, 0.025, 0.020])
_THUMB_SEGMENTS = np.array([0.030, 0.025, 0.020])
_MAX_BEND = np.deg2rad([70., 90., 60.])
# (base joint, second, third, tip) indices and knuckle position per finger
_FINGERS = (
    ((6, 7, 8, 20), (-0.022, 0.085, 0.0)),
    ((9, 10, 11, 21), (-0.004, 0.088, 0.0)),
    ((12, 13, 14, 22), (0.013, 0.085, 0.0)),
    ((16, 17, 18, 23), (0.028, 0.075, 0.0)),
)
_THUMB = ((3, 4, 5, 19), (-0.030, 0.035, 0.0))
_FIXED = {
    0: (0.0, 0.0, 0.0),
    1: (0.0, -0.05, 0.0),
    2: (-0.015, 0.015, 0.0),
    15: (0.020, 0.030, 0.0),
    24: (0.0, 0.045, 0.010),
}
_FINGER_DIR = np.array([0., 1., 0.])
_FINGER_BEND = np.array([0., 0., 1.])
_THUMB_DIR = np.array([-0.5, 0.85, 0.]) / np.hypot(0.5, 0.85)
_THUMB_BEND = np.array([0.6, 0., 0.8])


def _chain(curl, base, seg_lens, direction, bend_dir):
    '''Positions and cumulative bend (deg) of a 4-point finger chain.'''
    T = curl.size
    pos = np.empty((T, 4, 3))
    bend = np.empty((T, 4))
    pos[:, 0] = base
    phi = np.zeros(T)
    bend[:, 0] = 0.
    for k in range(3):
        phi = phi + curl*_MAX_BEND[k]
        step = np.cos(phi)[:, None]*direction + np.sin(phi)[:, None]*bend_dir
        pos[:, k+1] = pos[:, k] + seg_lens[k]*step
        bend[:, k+1] = np.rad2deg(phi)
    # The base joint carries the first bend
    bend[:, 0] = bend[:, 1]
    return pos, bend


def hand_local_pose(curls):
    '''Joint layout of a right hand for per-frame finger curls.

    Parameters
    ----------
    curls : ndarray (T, 5)
        Thumb, index, middle, ring, pinky curl in [0, 1].

    Returns
    -------
    local : ndarray (T, 25, 3)
        Joint positions relative to the wrist, meters.

    pitch : ndarray (T, 25)
        Per-joint flexion in degrees, added to the hand pitch.
    '''
    curls = np.clip(np.asarray(curls, dtype=float), 0., 1.)
    T = curls.shape[0]
    local = np.zeros((T, N_JOINTS, 3))
    pitch = np.zeros((T, N_JOINTS))
    for idx, pos in _FIXED.items():
        local[:, idx] = pos

    idx, base = _THUMB
    pos, bend = _chain(curls[:, 0], base, _THUMB_SEGMENTS, _THUMB_DIR,
            _THUMB_BEND)
    local[:, list(idx)] = pos
    pitch[:, list(idx)] = bend
    for finger, (idx, base) in enumerate(_FINGERS, start=1):
        pos, bend = _chain(curls[:, finger], base, _SEGMENTS, _FINGER_DIR,
                _FINGER_BEND)
        local[:, list(idx)] = pos
        pitch[:, list(idx)] = bend
    return local, pitch


@dataclass(frozen=True)
class SignerProfile:
    '''How one signer produces signs.

    speed_factor scales signing speed (duration = base / speed_factor);
    orientation_jitter_deg is the std-dev of the per-sample palm
    orientation bias (per-frame jitter uses a third of it);
    noise_std_m is the per-joint positional noise.
    '''
    handedness: str = 'right'
    speed_factor: float = 1.0
    spatial_offset: Tuple[float, float, float] = (0., 0., 0.)
    orientation_jitter_deg: float = 0.0
    noise_std_m: float = 0.0
    seed: int = 0
    signer_id: str = ''

    def validate(self):
        if self.handedness not in ('left', 'right'):
            raise InvalidConfig("Handedness must be left or right, got {}"
                    .format(self.handedness))
        if not 0.5 <= self.speed_factor <= 2.0:
            raise InvalidConfig("speed_factor must lie in [0.5, 2.0], got {}"
                    .format(self.speed_factor))
        if self.orientation_jitter_deg < 0 or self.noise_std_m < 0:
            raise InvalidConfig("Jitter and noise must be non-negative")
        offset = np.asarray(self.spatial_offset, dtype=float)
        if offset.shape != (3,) or not np.isfinite(offset).all():
            raise InvalidConfig("spatial_offset must be three finite numbers")
        return self


def _animate_hand(track, u, profile, rng, mirror_local):
    wrist = track.path(u) + np.asarray(profile.spatial_offset, dtype=float)
    rot = track.rotation(u)
    jitter = profile.orientation_jitter_deg
    if jitter > 0:
        rot = rot + rng.normal(0., jitter, 3)
        rot = rot + rng.normal(0., jitter/3., rot.shape)

    local, pitch = hand_local_pose(track.handshape(u))
    if mirror_local:
        local = local*np.array([-1., 1., 1.])
    R = Rotation.from_euler('xyz', rot, degrees=True).as_matrix()
    world = wrist[:, None, :] + np.einsum('tij,tkj->tki', R, local)
    if profile.noise_std_m > 0:
        world = world + rng.normal(0., profile.noise_std_m, world.shape)

    joint_rot = np.repeat(rot[:, None, :], N_JOINTS, axis=1)
    joint_rot[..., 0] += pitch
    return world, joint_rot, rot


def generate_sample(template, profile, rng=None, frame_rate_hz=FRAME_RATE_HZ,
        duration_s=DURATION_S, decimals=6):
    '''Animate one production of a template.

    Parameters
    ----------
    template : SignTemplate

    profile : SignerProfile

    rng : numpy.random.Generator, optional
        Random state. Defaults to ``default_rng(profile.seed)``, which makes
        the sample a pure function of (template, profile).

    frame_rate_hz, duration_s : float
        Capture rate and the duration at speed_factor 1. The produced
        duration is ``duration_s / speed_factor`` clamped to [1, 6] s.

    decimals : int or None
        Locations (m) and rotations (deg) are rounded to this many decimals.

    Raises
    ------
    InvalidTemplate
        If ``template`` is not a usable SignTemplate.
    '''
    if not isinstance(template, SignTemplate):
        raise InvalidTemplate("Expected a SignTemplate, got {!r}".format(
            template))
    profile.validate()
    if rng is None:
        rng = np.random.default_rng(profile.seed)

    duration = np.clip(duration_s/profile.speed_factor, MIN_DURATION_S,
            MAX_DURATION_S)
    n_frames = int(round(duration*frame_rate_hz)) + 1
    ts = np.arange(n_frames)/frame_rate_hz
    u = ts/ts[-1]

    joints = np.zeros((n_frames, 2, N_JOINTS, 6))
    hrot = np.zeros((n_frames, 2, 3))
    present = np.zeros((n_frames, 2), dtype=bool)

    world, jrot, rot = _animate_hand(template.dominant, u, profile, rng,
            mirror_local=False)
    joints[:, RIGHT, :, 0:3] = world
    joints[:, RIGHT, :, 3:6] = jrot
    hrot[:, RIGHT] = rot
    present[:, RIGHT] = True
    if template.two_handed:
        world, jrot, rot = _animate_hand(template.nondominant, u, profile,
                rng, mirror_local=True)
        joints[:, LEFT, :, 0:3] = world
        joints[:, LEFT, :, 3:6] = jrot
        hrot[:, LEFT] = rot
        present[:, LEFT] = True

    joints[..., 3:6] = wrap_degrees(joints[..., 3:6])
    hrot = wrap_degrees(hrot)
    if decimals is not None:
        joints = np.round(joints, decimals)
        hrot = np.round(hrot, decimals)

    sample = GestureSample(label=template.label, timestamps=ts,
            joints=joints, hand_rotation=hrot, hand_present=present,
            signer_id=profile.signer_id, handedness='right')
    if profile.handedness == 'left':
        sample = mirror_handedness(sample)
    return sample


@dataclass(frozen=True)
class DatasetSpec:
    '''Composition and variability of a synthetic dataset.

    The defaults reproduce the recorded corpus size: nine signs, fifteen
    signers, twenty repetitions (2,700 samples).
    '''
    classes: Tuple[str, ...] = CANONICAL_CLASSES
    signers: int = 15
    repetitions_per_class: int = 20
    frame_rate_hz: float = FRAME_RATE_HZ
    duration_s: float = DURATION_S
    master_seed: int = 42
    left_handed_ratio: float = 0.2
    speed_range: Tuple[float, float] = (0.8, 1.25)
    offset_std_m: float = 0.03
    orientation_jitter_deg: float = 4.0
    noise_std_m: float = 0.003
    decimals: int = 6

    def validate(self):
        if not self.classes:
            raise InvalidConfig("DatasetSpec needs at least one class")
        if self.signers < 1 or self.repetitions_per_class < 1:
            raise InvalidConfig("signers and repetitions must be >= 1")
        if self.frame_rate_hz*self.duration_s < 1:
            raise InvalidConfig("frame_rate_hz x duration_s must give at "
                    "least two frames")
        if not 0. <= self.left_handed_ratio <= 1.:
            raise InvalidConfig("left_handed_ratio must lie in [0, 1]")
        lo, hi = self.speed_range
        if not 0.5 <= lo <= hi <= 2.0:
            raise InvalidConfig("speed_range must lie within [0.5, 2.0]")
        if min(self.offset_std_m, self.orientation_jitter_deg,
                self.noise_std_m) < 0:
            raise InvalidConfig("Variability settings must be non-negative")
        return self

    @property
    def n_samples(self):
        return len(self.classes)*self.signers*self.repetitions_per_class


def signer_profiles(spec):
    '''Draw one profile per signer from the master seed.'''
    rng = np.random.default_rng(np.random.SeedSequence([spec.master_seed, 0]))
    n_left = int(round(spec.left_handed_ratio*spec.signers))
    left = set(rng.permutation(spec.signers)[:n_left].tolist())
    width = max(2, len(str(spec.signers)))
    profiles = []
    for s in range(spec.signers):
        offset = rng.normal(0., spec.offset_std_m, 3)
        profiles.append(SignerProfile(
            handedness='left' if s in left else 'right',
            speed_factor=float(rng.uniform(*spec.speed_range)),
            spatial_offset=tuple(offset.tolist()),
            orientation_jitter_deg=spec.orientation_jitter_deg,
            noise_std_m=spec.noise_std_m,
            seed=0,
            signer_id='S{:0{}d}'.format(s + 1, width),
        ))
    return profiles


def _sample_seed(master_seed, signer, class_idx, rep):
    ss = np.random.SeedSequence([master_seed, 1, signer, class_idx, rep])
    return int(ss.generate_state(1)[0])


def generate_dataset(spec=None, library=None, threads=1):
    '''Generate a class-balanced synthetic dataset.

    Samples are ordered signer-major, then class (in ``spec.classes``
    order), then repetition. Each repetition varies the signer's speed by
    up to 5 percent.

    Raises
    ------
    MissingTemplate
        If the library has no template for one of ``spec.classes``.
    '''
    if spec is None:
        spec = DatasetSpec()
    spec.validate()
    if library is None:
        library = TemplateLibrary()
    templates = [library[label] for label in spec.classes]
    profiles = signer_profiles(spec)

    jobs = []
    for s, profile in enumerate(profiles):
        for c, template in enumerate(templates):
            for r in range(spec.repetitions_per_class):
                seed = _sample_seed(spec.master_seed, s, c, r)
                wobble = np.random.default_rng(seed).uniform(0.95, 1.05)
                speed = float(np.clip(profile.speed_factor*wobble, 0.5, 2.0))
                jobs.append((template,
                        replace(profile, seed=seed, speed_factor=speed)))

    logger.info("Generating: %d samples (%d classes x %d signers x %d reps)",
            len(jobs), len(templates), spec.signers,
            spec.repetitions_per_class)

    def make(job):
        template, profile = job
        logger.debug("Generating: %s %s", template.label, profile.signer_id)
        return generate_sample(template, profile,
                frame_rate_hz=spec.frame_rate_hz, duration_s=spec.duration_s,
                decimals=spec.decimals)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(make, jobs))
    else:
        samples = [make(job) for job in jobs]

    provenance = ("synthetic: classes={} signers={} reps={} seed={}".format(
        ','.join(spec.classes), spec.signers, spec.repetitions_per_class,
        spec.master_seed))
    return GestureDataset(tuple(samples), provenance=provenance)


@dataclass(frozen=True)
class PerturbParams:
    '''Augmentations applied by ``perturb``; zero values switch them off.

    time_scale : speed-up factor; 2.0 halves the duration.
    '''
    time_scale: float = 0.0
    offset: Tuple[float, float, float] = field(default=(0., 0., 0.))
    orientation_jitter_deg: float = 0.0
    noise_std_m: float = 0.0

    def validate(self):
        if self.time_scale < 0 or self.orientation_jitter_deg < 0 \
                or self.noise_std_m < 0:
            raise InvalidConfig("Perturbation sizes must be non-negative")
        return self


def _resample(sample, scale):
    ts = sample.timestamps
    n = ts.size
    if n < 2:
        return sample
    # times are taken relative to the first frame, which need not be at 0
    t0 = ts[0]
    span = ts[-1] - t0
    rate = (n - 1)/span
    n_new = max(2, int(round(span/scale*rate)) + 1)
    elapsed = np.arange(n_new)/rate
    new_ts = t0 + elapsed
    src_t = np.clip(t0 + elapsed*scale, t0, ts[-1])

    def linear(values):
        return interp1d(ts, values, axis=0, assume_sorted=True)(src_t)

    def nearest(values):
        f = interp1d(ts, values.astype(float), axis=0, kind='nearest',
                assume_sorted=True)
        return f(src_t)

    loc = linear(sample.joints[..., 0:3])
    rot = np.rad2deg(np.unwrap(np.deg2rad(sample.joints[..., 3:6]), axis=0))
    hrot = np.rad2deg(np.unwrap(np.deg2rad(sample.hand_rotation), axis=0))
    joints = np.concatenate([loc, wrap_degrees(linear(rot))], axis=-1)
    return sample.replace(
        timestamps=new_ts,
        joints=joints,
        hand_rotation=wrap_degrees(linear(hrot)),
        hand_present=nearest(sample.hand_present) > 0.5,
        joint_counts=np.rint(nearest(sample.joint_counts)).astype(int),
    )


def perturb(sample, p, rng=None):
    '''Apply time rescaling, a spatial offset, orientation jitter and
    positional noise to a sample; the label is preserved.

    With all-zero ``PerturbParams`` the input sample is returned unchanged.
    The offset is exact: every present-hand location moves by exactly
    ``offset`` before noise is added.
    '''
    _require_valid(sample)
    p.validate()
    if rng is None:
        rng = np.random.default_rng()

    out = sample
    if p.time_scale > 0 and p.time_scale != 1.0:
        out = _resample(out, p.time_scale)

    offset = np.asarray(p.offset, dtype=float)
    if offset.any() or p.noise_std_m > 0 or p.orientation_jitter_deg > 0:
        present = out.hand_present[:, :, None, None]
        joints = np.array(out.joints)
        hrot = np.array(out.hand_rotation)
        if offset.any():
            joints[..., 0:3] = np.where(present, joints[..., 0:3] + offset,
                    joints[..., 0:3])
        if p.noise_std_m > 0:
            noise = rng.normal(0., p.noise_std_m, joints[..., 0:3].shape)
            joints[..., 0:3] = np.where(present, joints[..., 0:3] + noise,
                    joints[..., 0:3])
        if p.orientation_jitter_deg > 0:
            jitter = rng.normal(0., p.orientation_jitter_deg, hrot.shape)
            hrot = np.where(out.hand_present[:, :, None],
                    wrap_degrees(hrot + jitter), hrot)
            joints[..., 3:6] = np.where(present,
                    wrap_degrees(joints[..., 3:6] + jitter[:, :, None, :]),
                    joints[..., 3:6])
        out = out.replace(joints=joints, hand_rotation=hrot)

    _require_valid(out)
    return out
