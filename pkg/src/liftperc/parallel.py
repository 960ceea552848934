"""Deterministic fan-out of independent trials over a process pool.

A task is any picklable object with run(trial_index); each trial derives its
own counter-based stream from the task's seed and tag, so the assembled
result list is identical for every worker count and scheduling order.
"""

import pickle
from concurrent.futures import ProcessPoolExecutor

_TASK_CACHE = {}


def _run_chunk(task_bytes: bytes, lo: int, hi: int):
    key = hash(task_bytes)
    task = _TASK_CACHE.get(key)
    if task is None:
        task = pickle.loads(task_bytes)
        _TASK_CACHE.clear()
        _TASK_CACHE[key] = task
    return [task.run(i) for i in range(lo, hi)]


def run_task(task, n_trials: int, workers: int = 1) -> list:
    """Ordered per-trial results; pure function of (task, n_trials)."""
    if n_trials <= 0:
        return []
    if workers <= 1:
        return [task.run(i) for i in range(n_trials)]
    task_bytes = pickle.dumps(task)
    chunk = max(1, -(-n_trials // (workers * 4)))
    spans = [(lo, min(lo + chunk, n_trials)) for lo in range(0, n_trials, chunk)]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(_run_chunk, task_bytes, lo, hi) for lo, hi in spans]
        for fut in futures:
            out.extend(fut.result())
    return out
