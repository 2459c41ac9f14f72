import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aslchamp.errors import InvalidPlan, InvalidSample, MissingTemplate
from aslchamp.filetypes import write_records
from aslchamp.gesture import CANONICAL_CLASSES
from aslchamp.lesson import (AttemptCaptured, DemoFinished, LearnerProfile,
        LessonPlan, Phase, Tick, new_lesson, oracle_recognizer,
        read_transcript, replay, simulate_learner, step, write_transcript)
from aslchamp.templates import TEMPLATE_MAGIC, TemplateLibrary

from conftest import make_sample


def _kinds(state):
    return [ev.kind for ev in state.transcript]


def _to_prompt(state, now):
    '''Finish demonstrations until the lesson asks for an attempt.'''
    while state.phase is not Phase.AWAIT_ATTEMPT:
        state, _ = step(state, DemoFinished(now))
        now += 1.
    return state, now


def test_first_try_walk_through():
    plan = LessonPlan(signs=('MILK',))
    s = new_lesson(plan)
    assert s.phase is Phase.WELCOME
    assert s.transcript[0].data['text'] == plan.welcome_text

    s, out = step(s, DemoFinished(1.))
    assert s.phase is Phase.DEMONSTRATE and s.rep == 1
    assert [(d.kind, d.sign, d.data['rep']) for d in out] == \
            [('demonstrate', 'MILK', 1)]
    s, out = step(s, Tick(2.))
    assert out == [] and s.rep == 1 and len(s.transcript) == 2
    s, out = step(s, DemoFinished(3.))
    assert s.rep == 2
    s, out = step(s, DemoFinished(5.))
    assert s.phase is Phase.AWAIT_ATTEMPT
    assert out[0].kind == 'prompt' and out[0].data['deadline_s'] == 8.

    s, out = step(s, AttemptCaptured(make_sample('MILK'), 6.))
    assert s.phase is Phase.FEEDBACK
    assert [(d.kind, d.data['kind']) for d in out] == [('feedback',
        'positive')]
    s, out = step(s, DemoFinished(7.))
    assert s.phase is Phase.ADVANCE
    s, out = step(s, DemoFinished(8.))
    assert s.complete
    assert out[0].kind == 'complete'

    assert _kinds(s) == ['welcome', 'demo', 'demo', 'prompt', 'attempt',
            'feedback', 'advance', 'complete']
    assert s.first_try_passes == ('MILK',)
    assert s.needs_review == ()
    assert s.transcript[-1].data == {'first_try': 1, 'needs_review': []}


def test_three_failures_need_review():
    plan = LessonPlan(signs=('TEA', 'CUP'), demo_repetitions=1)
    s = new_lesson(plan)
    now = 1.
    for attempt in range(1, 4):
        s, now = _to_prompt(s, now)
        assert s.attempt == attempt and s.current_sign == 'TEA'
        s, _ = step(s, AttemptCaptured(make_sample('COOKIE'), now))
        assert s.retries == attempt
    s, _ = step(s, DemoFinished(now))
    assert s.phase is Phase.ADVANCE
    assert s.results[0].attempts == 3
    assert s.results[0].needs_review and not s.results[0].passed
    s, _ = step(s, DemoFinished(now + 1.))
    assert s.current_sign == 'CUP'
    assert (s.attempt, s.retries, s.verdict) == (0, 0, None)
    attempts = [ev for ev in s.transcript if ev.kind == 'attempt']
    assert [ev.data['predicted'] for ev in attempts] == ['COOKIE']*3
    assert [ev.data['verdict'] for ev in attempts] == ['incorrect']*3


def test_retry_then_pass():
    plan = LessonPlan(signs=('CUP',), demo_repetitions=1)
    s, now = _to_prompt(new_lesson(plan), 1.)
    s, _ = step(s, AttemptCaptured(make_sample('MUFFIN'), now))
    s, now = _to_prompt(s, now + 1.)
    s, _ = step(s, AttemptCaptured(make_sample('CUP'), now))
    s, _ = step(s, DemoFinished(now + 1.))
    assert s.results[0].passed and s.results[0].attempts == 2
    assert s.first_try_passes == ()


def test_timeouts():
    plan = LessonPlan(signs=('CUP',), demo_repetitions=1, capture_window_s=2.)
    s, now = _to_prompt(new_lesson(plan), 1.)
    deadline = s.deadline_s
    s, out = step(s, Tick(deadline - 0.5))
    assert out == [] and s.phase is Phase.AWAIT_ATTEMPT
    s, out = step(s, Tick(deadline))
    assert s.phase is Phase.FEEDBACK and s.verdict == 'timeout'
    assert out[0].data['kind'] == 'negative'

    s, now = _to_prompt(s, deadline + 1.)
    s, _ = step(s, AttemptCaptured(make_sample('CUP'), s.deadline_s + 0.1))
    assert s.verdict == 'timeout'
    assert s.retries == 2


def test_illegal_events_change_nothing_else():
    s = new_lesson(LessonPlan())
    before = s
    s, out = step(s, AttemptCaptured(make_sample(), 5.))
    assert out == []
    assert s.phase is Phase.WELCOME and s.now_s == before.now_s
    assert s.transcript[-1].kind == 'illegal'
    assert s.transcript[-1].data == {'event': 'AttemptCaptured',
            'phase': 'welcome'}

    s, now = _to_prompt(s, 1.)
    counters = (s.phase, s.attempt, s.retries, s.deadline_s, s.now_s)
    s, _ = step(s, DemoFinished(now + 0.5))
    assert (s.phase, s.attempt, s.retries, s.deadline_s, s.now_s) == counters
    assert s.transcript[-1].kind == 'illegal'


def test_events_after_completion():
    s = simulate_learner(LessonPlan(signs=('MILK',)), oracle_recognizer,
            LearnerProfile(base_success=1., latency_std_s=0.))
    n = len(s.transcript)
    s2, out = step(s, Tick(s.now_s + 10.))
    assert out == [] and len(s2.transcript) == n
    s3, out = step(s, DemoFinished())
    assert s3.complete and s3.transcript[-1].kind == 'illegal'


def test_clock_never_runs_backwards():
    s = new_lesson(LessonPlan(signs=('MILK',)))
    s, _ = step(s, DemoFinished(5.))
    s, _ = step(s, DemoFinished(2.))
    assert s.transcript[-1].at_s == 5.


def test_invalid_attempts_and_confidence():
    def reject(sample):
        raise InvalidSample('garbled')

    def unsure(sample):
        return sample.label, 0.4

    plan = LessonPlan(signs=('MILK',), demo_repetitions=1, min_confidence=0.5)
    s, now = _to_prompt(new_lesson(plan), 1.)
    s, _ = step(s, AttemptCaptured(make_sample('MILK'), now), reject)
    assert s.verdict == 'invalid'
    attempt = [ev for ev in s.transcript if ev.kind == 'attempt'][-1]
    assert attempt.data['predicted'] is None
    s, now = _to_prompt(s, now + 1.)
    s, _ = step(s, AttemptCaptured(make_sample('MILK'), now), unsure)
    assert s.verdict == 'incorrect'


@pytest.mark.parametrize('kwargs', [
    {'signs': ()},
    {'signs': ('ESPRESSO',)},
    {'max_retries': 0},
    {'batch_size': 0},
    {'demo_repetitions': 0},
    {'capture_window_s': 0.},
    {'min_confidence': 1.5},
])
def test_invalid_plan(kwargs):
    with pytest.raises(InvalidPlan):
        new_lesson(LessonPlan(**kwargs))


def test_batches():
    plan = LessonPlan(signs=CANONICAL_CLASSES[:6])
    assert plan.batches == [CANONICAL_CLASSES[:3], CANONICAL_CLASSES[3:6]]
    s = simulate_learner(plan, oracle_recognizer,
            LearnerProfile(base_success=1., latency_std_s=0.))
    batch = {ev.data['sign']: ev.data['batch'] for ev in s.transcript
            if ev.kind == 'demo'}
    assert [batch[sign] for sign in plan.signs] == [0, 0, 0, 1, 1, 1]


def test_perfect_learner():
    plan = LessonPlan()
    s = simulate_learner(plan, oracle_recognizer,
            LearnerProfile(base_success=1., latency_std_s=0.))
    assert s.complete
    assert s.first_try_passes == plan.signs
    assert s.needs_review == ()
    # welcome + per sign: 2 demos, prompt, attempt, feedback, advance
    assert len(s.transcript) == 1 + 6*3 + 1


def test_hopeless_learner():
    plan = LessonPlan()
    s = simulate_learner(plan, oracle_recognizer,
            LearnerProfile(base_success=0., gain=0.))
    assert s.needs_review == plan.signs
    assert [r.attempts for r in s.results] == [3, 3, 3]
    assert s.first_try_passes == ()


def test_direction_errors_with_oracle():
    # Backwards productions keep their label, so the oracle accepts them
    s = simulate_learner(LessonPlan(signs=('COFFEE',)), oracle_recognizer,
            LearnerProfile(base_success=0., gain=0., direction_error_rate=1.,
                latency_std_s=0.))
    assert s.first_try_passes == ('COFFEE',)


def test_simulation_is_deterministic():
    plan = LessonPlan()
    profile = LearnerProfile(seed=8)
    a = simulate_learner(plan, oracle_recognizer, profile)
    b = simulate_learner(plan, oracle_recognizer, profile)
    assert a == b


def test_bad_learner_profile():
    with pytest.raises(InvalidPlan):
        simulate_learner(LessonPlan(), oracle_recognizer,
                LearnerProfile(base_success=1.5))


def test_missing_confusable(tmp_path):
    track = {'path': {'kind': 'stationary', 'position': [0, 0, 0.3]}}
    path = str(tmp_path/'lib.jsonl')
    write_records(path, TEMPLATE_MAGIC, [{'label': 'CUP', 'dominant': track}])
    with pytest.raises(MissingTemplate):
        simulate_learner(LessonPlan(signs=('CUP',)), oracle_recognizer,
                LearnerProfile(), TemplateLibrary(path))
    with pytest.raises(MissingTemplate):
        simulate_learner(LessonPlan(signs=('TEA',)), oracle_recognizer,
                LearnerProfile(), TemplateLibrary(path))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_replay_rebuilds_state(seed):
    plan = LessonPlan(signs=('MILK', 'CUP'), demo_repetitions=1)
    s = simulate_learner(plan, oracle_recognizer,
            LearnerProfile(base_success=0.4, seed=seed))
    assert replay(plan, s.transcript) == s


def test_transcript_round_trip(tmp_path):
    plan = LessonPlan(signs=('MILK', 'TEA'), max_retries=2)
    s = simulate_learner(plan, oracle_recognizer,
            LearnerProfile(base_success=0.3, seed=2))
    fname = str(tmp_path/'lesson.jsonl')
    assert write_transcript(s, fname) == len(s.transcript)
    plan2, events = read_transcript(fname)
    assert plan2 == plan
    assert events == s.transcript
    assert replay(plan2, events) == s


def _check_invariants(plan, s):
    assert s.complete
    assert [r.sign for r in s.results] == list(plan.signs)
    times = [ev.at_s for ev in s.transcript]
    assert times == sorted(times)
    for r in s.results:
        assert 1 <= r.attempts <= plan.max_retries
        assert r.passed != r.needs_review
        if r.needs_review:
            assert r.attempts == plan.max_retries
    attempts = [ev for ev in s.transcript if ev.kind == 'attempt']
    assert len(attempts) == sum(r.attempts for r in s.results)
    assert s.transcript[-1].data['first_try'] == len(s.first_try_passes)


def _random_learners(n):
    rng = np.random.default_rng(123)
    for seed in range(n):
        yield LearnerProfile(base_success=float(rng.uniform()),
                gain=float(rng.uniform(0., 0.3)),
                latency_mean_s=float(rng.uniform(0.5, 3.)),
                direction_error_rate=float(rng.uniform()),
                handedness='left' if seed % 5 == 0 else 'right', seed=seed)


def test_lesson_invariants():
    plan = LessonPlan(signs=('MILK', 'TEA'), demo_repetitions=1)
    for profile in _random_learners(60):
        _check_invariants(plan, simulate_learner(plan, oracle_recognizer,
            profile))


@pytest.mark.slow
def test_lesson_invariants_many_learners():
    plan = LessonPlan()
    for profile in _random_learners(1000):
        _check_invariants(plan, simulate_learner(plan, oracle_recognizer,
            profile))
