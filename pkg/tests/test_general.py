import numpy as np
import pytest

from aslchamp.general import STAGES, THREADS_ENV, child_seed, chunker, \
        thread_count


def test_child_seed_is_stable_and_distinct():
    seeds = [child_seed(42, stage) for stage in STAGES]
    assert len(set(seeds)) == len(STAGES)
    assert child_seed(42, 'shuffle') == child_seed(42, STAGES['shuffle'])
    assert child_seed(42, 'data') != child_seed(43, 'data')
    expected = int(np.random.SeedSequence([42, 3]).generate_state(1)[0])
    assert child_seed(42, 'shuffle') == expected


def test_thread_count(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert thread_count() == 1
    assert thread_count(3) == 3
    monkeypatch.setenv(THREADS_ENV, '4')
    assert thread_count() == 4
    assert thread_count(2) == 2
    with pytest.raises(ValueError):
        thread_count(0)


def test_chunker():
    chunks = list(chunker(np.arange(7), 3))
    assert [c.tolist() for c in chunks] == [[0, 1, 2], [3, 4, 5], [6]]
    assert list(chunker([], 3)) == []
