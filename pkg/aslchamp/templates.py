'''Sign templates: parametric hand paths, handshapes and orientation curves.

Templates are authored for a right-handed signer in headset-local meters
(x right, y up, z forward). The dominant hand is the right hand; the
non-dominant hand, if any, is the left. All curves are functions of the
normalized time u in [0, 1].

A template library file is an ``ASLCHAMP-TPL`` record file (see
``aslchamp.filetypes``) with one record per sign. The default library ships
in ``aslchamp/data/templates.jsonl``.
'''
import os
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import make_interp_spline

from aslchamp.errors import InvalidTemplate, MissingTemplate
from aslchamp.filetypes import read_records
from aslchamp.gesture import is_known_label, register_control_class

logger = logging.getLogger(__name__)

_ROOT = os.path.abspath(os.path.dirname(__file__))
DEFAULT_LIBRARY = os.path.join(_ROOT, 'data', 'templates.jsonl')
TEMPLATE_MAGIC = 'ASLCHAMP-TPL'

# Per-finger curl (thumb, index, middle, ring, pinky); 0 straight, 1 closed
HANDSHAPES = {
    'flat': (0.0, 0.0, 0.0, 0.0, 0.0),
    'fist': (0.8, 1.0, 1.0, 1.0, 1.0),
    'c': (0.3, 0.45, 0.45, 0.45, 0.45),
    'o': (0.7, 0.8, 0.8, 0.8, 0.8),
    'flat_o': (0.6, 0.25, 0.25, 0.25, 0.25),
    'f': (0.8, 0.85, 0.0, 0.0, 0.0),
    'index': (0.8, 0.0, 1.0, 1.0, 1.0),
    'h': (0.8, 0.0, 0.0, 1.0, 1.0),
    'claw': (0.2, 0.65, 0.65, 0.65, 0.65),
}

_PLANES = {'xy': (0, 1), 'xz': (0, 2), 'yz': (1, 2)}


class PathCurve(object):
    '''A wrist path u -> (x, y, z).

    Kinds
    -----
    stationary : ``position``
    line : ``start``, ``end``
    taps : ``start``, ``end``, ``count``; moves to ``end`` and back
        ``count`` times.
    circle : ``center``, ``radius``, ``plane`` ('xy', 'xz', 'yz'),
        ``turns``, ``direction`` ('ccw' or 'cw'), ``phase_deg``.
        Counter-clockwise is judged with the plane's first axis to the
        right and second axis up.
    spline : ``points``; interpolating spline through equally spaced
        control points (cubic when there are four or more).
    '''
    kinds = ('stationary', 'line', 'taps', 'circle', 'spline')

    def __init__(self, spec):
        self.spec = dict(spec)
        self.kind = self.spec.get('kind')
        if self.kind not in self.kinds:
            raise InvalidTemplate("Unknown path kind: {}".format(self.kind))
        try:
            self._setup()
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidTemplate("Bad {} path {}: {}".format(self.kind,
                self.spec, exc))

    def _vec(self, key):
        vec = np.array(self.spec[key], dtype=float)
        if vec.shape != (3,) or not np.isfinite(vec).all():
            raise ValueError("{} must be three finite numbers".format(key))
        return vec

    def _setup(self):
        spec = self.spec
        if self.kind == 'stationary':
            self.position = self._vec('position')
        elif self.kind in ('line', 'taps'):
            self.start = self._vec('start')
            self.end = self._vec('end')
            self.count = int(spec.get('count', 1))
            if self.count < 1:
                raise ValueError("count must be >= 1")
        elif self.kind == 'circle':
            self.center = self._vec('center')
            self.radius = float(spec['radius'])
            self.axes = _PLANES[spec.get('plane', 'xz')]
            self.turns = float(spec.get('turns', 1))
            direction = spec.get('direction', 'ccw')
            if direction not in ('ccw', 'cw'):
                raise ValueError("direction must be ccw or cw")
            self.sign = 1. if direction == 'ccw' else -1.
            self.phase = np.deg2rad(float(spec.get('phase_deg', 0.)))
            if self.radius <= 0 or self.turns <= 0:
                raise ValueError("radius and turns must be positive")
        elif self.kind == 'spline':
            points = np.array(spec['points'], dtype=float)
            if points.ndim != 2 or points.shape[1] != 3 or len(points) < 2:
                raise ValueError("need at least two 3-D control points")
            knots = np.linspace(0., 1., len(points))
            k = min(3, len(points) - 1)
            self._spline = make_interp_spline(knots, points, k=k)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        ones = np.ones((u.size, 1))
        if self.kind == 'stationary':
            return ones*self.position
        if self.kind == 'line':
            return self.start + u[:, None]*(self.end - self.start)
        if self.kind == 'taps':
            s = 0.5*(1. - np.cos(2.*np.pi*self.count*u))
            return self.start + s[:, None]*(self.end - self.start)
        if self.kind == 'circle':
            theta = self.phase + self.sign*2.*np.pi*self.turns*u
            pts = ones*self.center
            a, b = self.axes
            pts[:, a] += self.radius*np.cos(theta)
            pts[:, b] += self.radius*np.sin(theta)
            return pts
        return self._spline(u)


class Keyframes(object):
    '''Piecewise-linear curve through ``(u, value)`` keys, held at the ends.'''
    def __init__(self, keys, width):
        keys = sorted(((float(u), np.asarray(v, dtype=float))
                for u, v in keys), key=lambda k: k[0])
        if not keys:
            raise InvalidTemplate("Keyframe list is empty")
        self.u = np.array([k[0] for k in keys])
        self.values = np.array([k[1] for k in keys])
        if self.values.shape != (len(keys), width):
            raise InvalidTemplate("Keyframe values must have {} entries"
                    .format(width))
        if self.u.min() < 0. or self.u.max() > 1.:
            raise InvalidTemplate("Keyframe times must lie in [0, 1]")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.empty((u.size, self.values.shape[1]))
        for col in range(self.values.shape[1]):
            out[:, col] = np.interp(u, self.u, self.values[:, col])
        return out


@dataclass(frozen=True)
class HandTrack:
    '''Everything needed to animate one hand.'''
    path: PathCurve
    handshape: Keyframes
    rotation: Keyframes


@dataclass(frozen=True)
class SignTemplate:
    label: str
    dominant: HandTrack
    nondominant: Optional[HandTrack] = None
    control: bool = False
    confusable: Optional[str] = None

    @property
    def two_handed(self):
        return self.nondominant is not None

    @property
    def dominant_path(self):
        return self.dominant.path

    @property
    def nondominant_path(self):
        return None if self.nondominant is None else self.nondominant.path


def _handshape_keys(keys):
    out = []
    for u, shape in keys:
        if isinstance(shape, str):
            if shape not in HANDSHAPES:
                raise InvalidTemplate("Unknown handshape: {}".format(shape))
            shape = HANDSHAPES[shape]
        out.append((u, shape))
    return out


def _track(record):
    if 'path' not in record:
        raise InvalidTemplate("Hand track has no path")
    return HandTrack(
        path=PathCurve(record['path']),
        handshape=Keyframes(_handshape_keys(
            record.get('handshape', [[0.0, 'flat']])), 5),
        rotation=Keyframes(record.get('rotation', [[0.0, [0., 0., 0.]]]), 3),
    )


def template_from_record(record):
    '''Build a ``SignTemplate`` from a library record.

    Control templates (``"control": true``) register their label as a
    synthetic control class.
    '''
    try:
        label = str(record['label']).upper()
        control = bool(record.get('control', False))
        if control:
            register_control_class(label)
        elif not is_known_label(label):
            raise InvalidTemplate("Unknown sign label: {}".format(label))
        nondominant = record.get('nondominant')
        two_handed = bool(record.get('two_handed', nondominant is not None))
        if two_handed != (nondominant is not None):
            raise InvalidTemplate("{}: two_handed does not match the "
                    "non-dominant track".format(label))
        return SignTemplate(
            label=label,
            dominant=_track(record['dominant']),
            nondominant=None if nondominant is None else _track(nondominant),
            control=control,
            confusable=record.get('confusable'),
        )
    except (KeyError, TypeError) as exc:
        raise InvalidTemplate("Malformed template record: {}".format(exc))


class TemplateLibrary(object):
    '''A set of sign templates read from an ``ASLCHAMP-TPL`` file.

    Parameters
    ----------
    fname : str, optional
        Library file. Defaults to the shipped library.
    '''
    def __init__(self, fname=None):
        self.fname = DEFAULT_LIBRARY if fname is None else fname
        self.templates = {}
        self._lib_build()

    def _lib_build(self):
        header, records = read_records(self.fname, TEMPLATE_MAGIC)
        self.version = header.get('library_version', 0)
        for lineno, record in records:
            template = template_from_record(record)
            if template.label in self.templates:
                raise InvalidTemplate("{}:{}: duplicate template {}".format(
                    self.fname, lineno, template.label))
            self.templates[template.label] = template
        logger.debug("Templates: %d read from %s", len(self.templates),
                self.fname)

    def __getitem__(self, label):
        try:
            return self.templates[label]
        except KeyError:
            raise MissingTemplate("No template for sign {}".format(label))

    def __contains__(self, label):
        return label in self.templates

    def __len__(self):
        return len(self.templates)

    @property
    def labels(self):
        return tuple(self.templates)

    def confusable(self, label):
        '''Template a learner is likely to produce instead of ``label``.'''
        other = self[label].confusable
        if other is None:
            raise MissingTemplate("No confusable template for {}".format(
                label))
        return self[other]
