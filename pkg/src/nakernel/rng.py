"""Deterministic random streams and an order-preserving task runner.

Every stochastic routine takes an integer ``seed``.  Sub-tasks never share a
generator: task ``i`` of a run with master seed ``s`` draws from
``derive_rng(s, i)``, so results do not depend on how tasks are scheduled
across worker processes.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

WORKERS_ENV = "NAKERNEL_WORKERS"


def _seed_sequence(seed: int, keys: Sequence[int]) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                  spawn_key=tuple(int(k) for k in keys))


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based (Philox) generator for stream ``keys`` of ``seed``."""
    return np.random.Generator(np.random.Philox(_seed_sequence(seed, keys)))


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed for sub-stream ``keys``; stable across runs."""
    word = _seed_sequence(seed, keys).generate_state(2, dtype=np.uint32)
    return int((int(word[0]) << 31) ^ int(word[1])) & (2**63 - 1)


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, int(workers))


def run_tasks(fn: Callable, tasks: Iterable, workers: int | None = 1) -> list:
    """``[fn(task) for task in tasks]``, optionally on a process pool.

    Output order always matches input order, which keeps downstream
    aggregation independent of the worker count.
    """
    tasks = list(tasks)
    workers = resolve_workers(workers)
    if workers == 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))
