'''Small helpers shared by the pipeline stages.'''
import os

import numpy as np

# Stage counters for seed fan-out. A single global seed reproduces a run.
STAGES = {
    'data': 0,
    'split': 1,
    'init': 2,
    'shuffle': 3,
    'dropout': 4,
    'lesson': 5,
}

THREADS_ENV = 'ASLCHAMP_THREADS'


def child_seed(seed, stage):
    '''Derive the seed for one pipeline stage from the global seed.

    Parameters
    ----------
    seed : int
        The global seed.

    stage : str or int
        A key of ``STAGES`` or a raw counter.

    Returns
    -------
    int
        A 32-bit seed, ``SeedSequence([seed, stage]).generate_state(1)[0]``.
    '''
    if isinstance(stage, str):
        stage = STAGES[stage]
    ss = np.random.SeedSequence([int(seed), int(stage)])
    return int(ss.generate_state(1)[0])


def thread_count(threads=None):
    '''Resolve the worker count: explicit value, then $ASLCHAMP_THREADS, then 1.'''
    if threads is None:
        env = os.environ.get(THREADS_ENV, '').strip()
        threads = int(env) if env else 1
    threads = int(threads)
    if threads < 1:
        raise ValueError("Thread count must be >= 1, got {}".format(threads))
    return threads


# This function is from: http://stackoverflow.com/questions/434287
def chunker(seq, size):
    return (seq[pos:pos + size] for pos in range(0, len(seq), size))
