'''The teaching loop as a deterministic state machine.

A lesson welcomes the learner, then for every sign of the plan shows the
sign ``demo_repetitions`` times, prompts for an attempt and gives feedback.
A correct attempt advances to the next sign; an incorrect one demonstrates
the sign again. After ``max_retries`` incorrect attempts the lesson moves on
and marks the sign ``needs_review``.

The host drives the machine with three events:

* ``Tick(now_s)`` - time passes; an open capture window may expire.
* ``DemoFinished(now_s)`` - the host finished presenting the current
  demonstration, welcome or feedback.
* ``AttemptCaptured(sample, at_s)`` - the learner produced a sign.

``step`` turns an event into transcript events and folds them into the
state with the same function ``replay`` uses, so a transcript always
rebuilds the exact state it came from. Events that make no sense in the
current phase are logged as ``illegal`` and otherwise ignored.

Phase transitions::

    Welcome       --Tick/DemoFinished-->  Demonstrate(sign 1, rep 1)
    Demonstrate   --DemoFinished-->       next rep, or AwaitAttempt
    AwaitAttempt  --AttemptCaptured-->    Feedback
    AwaitAttempt  --Tick past deadline--> Feedback (timeout)
    Feedback      --Tick/DemoFinished-->  Advance, or Demonstrate(rep 1)
    Advance       --Tick/DemoFinished-->  Demonstrate(next sign), Complete
'''
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from aslchamp.errors import InvalidPlan, InvalidSample, MissingTemplate
from aslchamp.filetypes import write_records, read_records
from aslchamp.gesture import is_known_label, time_reverse
from aslchamp.network import predict
from aslchamp.synth import SignerProfile, generate_sample
from aslchamp.templates import TemplateLibrary

logger = logging.getLogger(__name__)

LESSON_MAGIC = 'ASLCHAMP-LESSON'
WELCOME_TEXT = ("Welcome to the coffee shop. Now I will show you some signs. "
        "Ready?")


class Phase(Enum):
    WELCOME = 'welcome'
    DEMONSTRATE = 'demonstrate'
    AWAIT_ATTEMPT = 'await_attempt'
    FEEDBACK = 'feedback'
    ADVANCE = 'advance'
    COMPLETE = 'complete'


@dataclass(frozen=True)
class LessonPlan:
    '''Signs to teach and the pacing of the lesson.'''
    signs: Tuple[str, ...] = ('MILK', 'TEA', 'COFFEE')
    batch_size: int = 3
    demo_repetitions: int = 2
    capture_window_s: float = 3.0
    max_retries: int = 3
    welcome_text: str = WELCOME_TEXT
    min_confidence: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'signs', tuple(self.signs))

    def validate(self):
        if not self.signs:
            raise InvalidPlan("A lesson needs at least one sign")
        for sign in self.signs:
            if not is_known_label(sign):
                raise InvalidPlan("Unknown sign {} in lesson plan".format(sign))
        if self.batch_size < 1:
            raise InvalidPlan("batch_size must be >= 1")
        if self.demo_repetitions < 1:
            raise InvalidPlan("demo_repetitions must be >= 1")
        if self.max_retries < 1:
            raise InvalidPlan("max_retries must be >= 1, got {}".format(
                self.max_retries))
        if not self.capture_window_s > 0:
            raise InvalidPlan("capture_window_s must be positive")
        if not 0. <= self.min_confidence <= 1.:
            raise InvalidPlan("min_confidence must lie in [0, 1]")
        return self

    @property
    def batches(self):
        n = self.batch_size
        return [self.signs[i:i + n] for i in range(0, len(self.signs), n)]

    def to_dict(self):
        return {'signs': list(self.signs), 'batch_size': self.batch_size,
                'demo_repetitions': self.demo_repetitions,
                'capture_window_s': self.capture_window_s,
                'max_retries': self.max_retries,
                'welcome_text': self.welcome_text,
                'min_confidence': self.min_confidence}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class Tick:
    now_s: float


@dataclass(frozen=True)
class DemoFinished:
    now_s: Optional[float] = None


@dataclass(frozen=True, eq=False)
class AttemptCaptured:
    sample: Any
    at_s: Optional[float] = None


@dataclass(frozen=True)
class TranscriptEvent:
    kind: str
    at_s: float
    data: Dict[str, Any] = field(default_factory=dict)

    def to_record(self):
        return {'kind': self.kind, 'at_s': self.at_s, 'data': self.data}

    @classmethod
    def from_record(cls, record):
        return cls(record['kind'], record['at_s'], dict(record['data']))


@dataclass(frozen=True)
class Directive:
    '''What the host should present next.'''
    kind: str
    sign: Optional[str] = None
    data: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SignResult:
    sign: str
    attempts: int
    passed: bool
    needs_review: bool


@dataclass(frozen=True)
class LessonState:
    plan: LessonPlan
    phase: Phase = Phase.WELCOME
    index: int = 0
    rep: int = 0
    attempt: int = 0
    retries: int = 0
    verdict: Optional[str] = None
    deadline_s: Optional[float] = None
    now_s: float = 0.0
    results: Tuple[SignResult, ...] = ()
    transcript: Tuple[TranscriptEvent, ...] = ()

    @property
    def current_sign(self):
        return self.plan.signs[self.index]

    @property
    def batch(self):
        return self.index//self.plan.batch_size

    @property
    def complete(self):
        return self.phase is Phase.COMPLETE

    @property
    def needs_review(self):
        return tuple(r.sign for r in self.results if r.needs_review)

    @property
    def first_try_passes(self):
        return tuple(r.sign for r in self.results
                if r.passed and r.attempts == 1)


def _apply(state, ev):
    '''Fold one transcript event into the state.'''
    kind, d = ev.kind, ev.data
    log = state.transcript + (ev,)
    if kind == 'illegal':
        return replace(state, transcript=log)
    state = replace(state, now_s=ev.at_s, transcript=log)
    if kind == 'welcome':
        return replace(state, phase=Phase.WELCOME, index=0)
    if kind == 'demo':
        if d['index'] != state.index:
            state = replace(state, attempt=0, retries=0, verdict=None)
        return replace(state, phase=Phase.DEMONSTRATE, index=d['index'],
                rep=d['rep'], deadline_s=None)
    if kind == 'prompt':
        return replace(state, phase=Phase.AWAIT_ATTEMPT,
                attempt=d['attempt'], deadline_s=d['deadline_s'])
    if kind == 'attempt':
        retries = state.retries + (d['verdict'] != 'correct')
        return replace(state, verdict=d['verdict'], retries=retries,
                deadline_s=None)
    if kind == 'feedback':
        return replace(state, phase=Phase.FEEDBACK)
    if kind == 'advance':
        result = SignResult(d['sign'], d['attempts'], d['passed'],
                d['needs_review'])
        return replace(state, phase=Phase.ADVANCE,
                results=state.results + (result,))
    if kind == 'complete':
        return replace(state, phase=Phase.COMPLETE)
    raise ValueError("Unknown transcript event {}".format(kind))


def _clock(state, t):
    return state.now_s if t is None else max(state.now_s, float(t))


def _demo(state, index, rep, now):
    return TranscriptEvent('demo', now, {'sign': state.plan.signs[index],
        'index': index, 'rep': rep,
        'batch': index//state.plan.batch_size})


def _attempt(state, now, predicted, confidence, verdict):
    sign = state.current_sign
    return [
        TranscriptEvent('attempt', now, {'sign': sign,
            'attempt': state.attempt, 'predicted': predicted,
            'confidence': confidence, 'verdict': verdict}),
        TranscriptEvent('feedback', now, {'sign': sign,
            'kind': 'positive' if verdict == 'correct' else 'negative'}),
    ]


def oracle_recognizer(sample):
    '''Recognize every sample as its own label with full confidence.'''
    return sample.label, 1.0


def net_recognizer(net):
    '''Recognizer backed by a trained network.'''
    def recognize(sample):
        p = predict(net, sample)
        return p.label, p.confidence
    return recognize


def _classify(state, sample, recognizer):
    try:
        label, confidence = recognizer(sample)
    except InvalidSample as exc:
        logger.warning("Lesson: attempt rejected (%s)", exc)
        return None, None, 'invalid'
    confidence = float(confidence)
    ok = (label == state.current_sign
            and confidence >= state.plan.min_confidence)
    return label, confidence, 'correct' if ok else 'incorrect'


def _transition(state, event, recognizer):
    '''Transcript events caused by ``event``; empty for a no-op.'''
    phase = state.phase
    plan = state.plan
    if isinstance(event, (Tick, DemoFinished)):
        now = _clock(state, event.now_s)
        finished = isinstance(event, DemoFinished)
        if phase in (Phase.WELCOME, Phase.ADVANCE, Phase.FEEDBACK):
            if phase is Phase.WELCOME:
                return [_demo(state, 0, 1, now)]
            if phase is Phase.ADVANCE:
                if state.index + 1 < len(plan.signs):
                    return [_demo(state, state.index + 1, 1, now)]
                return [TranscriptEvent('complete', now, {
                    'first_try': len(state.first_try_passes),
                    'needs_review': list(state.needs_review)})]
            if state.verdict == 'correct' or state.retries >= plan.max_retries:
                passed = state.verdict == 'correct'
                return [TranscriptEvent('advance', now, {
                    'sign': state.current_sign, 'attempts': state.attempt,
                    'passed': passed, 'needs_review': not passed})]
            return [_demo(state, state.index, 1, now)]
        if phase is Phase.DEMONSTRATE:
            if not finished:
                return []
            if state.rep < plan.demo_repetitions:
                return [_demo(state, state.index, state.rep + 1, now)]
            return [TranscriptEvent('prompt', now, {
                'sign': state.current_sign, 'attempt': state.attempt + 1,
                'deadline_s': now + plan.capture_window_s})]
        if phase is Phase.AWAIT_ATTEMPT:
            if finished:
                return None
            if now >= state.deadline_s:
                return _attempt(state, now, None, None, 'timeout')
            return []
        # Complete
        return None if finished else []

    if isinstance(event, AttemptCaptured):
        if phase is not Phase.AWAIT_ATTEMPT:
            return None
        at = _clock(state, event.at_s)
        if at > state.deadline_s:
            return _attempt(state, at, None, None, 'timeout')
        if recognizer is None:
            recognizer = oracle_recognizer
        return _attempt(state, at, *_classify(state, event.sample, recognizer))
    return None


_DIRECTIVES = {
    'welcome': lambda ev: Directive('welcome', None,
        {'text': ev.data['text']}),
    'demo': lambda ev: Directive('demonstrate', ev.data['sign'],
        {'rep': ev.data['rep']}),
    'prompt': lambda ev: Directive('prompt', ev.data['sign'],
        {'attempt': ev.data['attempt'], 'deadline_s': ev.data['deadline_s']}),
    'feedback': lambda ev: Directive('feedback', ev.data['sign'],
        {'kind': ev.data['kind']}),
    'complete': lambda ev: Directive('complete'),
}


def new_lesson(plan):
    '''Start a lesson: Welcome phase with one welcome event.

    Raises
    ------
    InvalidPlan
    '''
    plan.validate()
    welcome = TranscriptEvent('welcome', 0.0, {'text': plan.welcome_text,
        'signs': list(plan.signs)})
    return _apply(LessonState(plan), welcome)


def step(state, event, recognizer=None):
    '''Advance the machine by one event.

    Parameters
    ----------
    state : LessonState

    event : Tick, DemoFinished or AttemptCaptured

    recognizer : callable, optional
        ``recognizer(sample) -> (label, confidence)``. Defaults to
        ``oracle_recognizer``.

    Returns
    -------
    state : LessonState
    directives : list of Directive
    '''
    events = _transition(state, event, recognizer)
    if events is None:
        kind = type(event).__name__
        logger.warning("Lesson: ignoring %s during %s", kind,
                state.phase.value)
        events = [TranscriptEvent('illegal', state.now_s, {'event': kind,
            'phase': state.phase.value})]
    for ev in events:
        logger.debug("Lesson: %s %s", ev.kind, ev.data)
        state = _apply(state, ev)
    directives = [_DIRECTIVES[ev.kind](ev) for ev in events
            if ev.kind in _DIRECTIVES]
    return state, directives


def replay(plan, transcript):
    '''Rebuild the lesson state from its transcript.'''
    state = LessonState(plan)
    for ev in transcript:
        state = _apply(state, ev)
    return state


def write_transcript(state, path):
    '''Write a lesson transcript as an ``ASLCHAMP-LESSON`` record file.'''
    logger.info("Writing: transcript %s (%d events)", path,
            len(state.transcript))
    return write_records(path, LESSON_MAGIC,
            (ev.to_record() for ev in state.transcript),
            plan=state.plan.to_dict())


def read_transcript(path):
    '''Read a transcript file.

    Returns
    -------
    plan : LessonPlan
    transcript : tuple of TranscriptEvent
    '''
    header, records = read_records(path, LESSON_MAGIC)
    plan = LessonPlan.from_dict(header['plan'])
    return plan, tuple(TranscriptEvent.from_record(r) for _, r in records)


@dataclass(frozen=True)
class LearnerProfile:
    '''A simulated learner.

    The chance that attempt ``k`` (1-based) on a sign is correct is
    ``min(1, base_success + gain*(k - 1))``. A wrong attempt produces the
    sign's confusable template, or with ``direction_error_rate`` the
    correct sign played backwards. Response latencies are normal,
    truncated at zero; a latency past the capture window is a timeout.
    '''
    base_success: float = 0.7
    gain: float = 0.15
    latency_mean_s: float = 1.5
    latency_std_s: float = 0.5
    direction_error_rate: float = 0.0
    handedness: str = 'right'
    orientation_jitter_deg: float = 4.0
    noise_std_m: float = 0.003
    seed: int = 0

    def validate(self):
        for name in ('base_success', 'direction_error_rate'):
            if not 0. <= getattr(self, name) <= 1.:
                raise InvalidPlan("{} must lie in [0, 1]".format(name))
        if self.gain < 0 or self.latency_mean_s < 0 or self.latency_std_s < 0:
            raise InvalidPlan("gain and latencies must be non-negative")
        return self

    def success_probability(self, attempt):
        return min(1., self.base_success + self.gain*(attempt - 1))


def simulate_learner(plan, recognizer, profile, library=None,
        demo_duration_s=2.0, feedback_duration_s=1.0):
    '''Drive a lesson to completion with a simulated learner.

    Parameters
    ----------
    plan : LessonPlan

    recognizer : callable or ChampNet
        ``recognizer(sample) -> (label, confidence)``, e.g.
        ``oracle_recognizer``. A network is wrapped with
        ``net_recognizer``.

    profile : LearnerProfile

    library : TemplateLibrary, optional

    Returns
    -------
    LessonState
        The completed lesson; ``state.transcript`` is the transcript.

    Raises
    ------
    MissingTemplate
        If a plan sign or its confusable sign has no template.
    '''
    plan.validate()
    profile.validate()
    if hasattr(recognizer, 'predict_proba'):
        recognizer = net_recognizer(recognizer)
    if library is None:
        library = TemplateLibrary()
    for sign in plan.signs:
        library[sign]
        library.confusable(sign)

    rng = np.random.default_rng(profile.seed)
    state = new_lesson(plan)
    while not state.complete:
        if state.phase is Phase.AWAIT_ATTEMPT:
            event = _learner_attempt(state, profile, library, rng)
        elif state.phase is Phase.DEMONSTRATE:
            event = DemoFinished(state.now_s + demo_duration_s)
        else:
            event = DemoFinished(state.now_s + feedback_duration_s)
        state, _ = step(state, event, recognizer)
    logger.info("Lesson: complete, %d/%d first-try passes, %d for review",
            len(state.first_try_passes), len(plan.signs),
            len(state.needs_review))
    return state


def _learner_attempt(state, profile, library, rng):
    latency = max(0., rng.normal(profile.latency_mean_s,
        profile.latency_std_s))
    at = state.now_s + latency
    if at > state.deadline_s:
        return Tick(state.deadline_s)

    sign = state.current_sign
    correct = rng.random() < profile.success_probability(state.attempt)
    reverse = False
    if correct:
        template = library[sign]
    elif rng.random() < profile.direction_error_rate:
        template = library[sign]
        reverse = True
    else:
        template = library.confusable(sign)
    signer = SignerProfile(handedness=profile.handedness,
            orientation_jitter_deg=profile.orientation_jitter_deg,
            noise_std_m=profile.noise_std_m,
            seed=int(rng.integers(2**32)), signer_id='learner')
    sample = generate_sample(template, signer)
    if reverse:
        sample = time_reverse(sample)
    return AttemptCaptured(sample, at)
