"""Seeded Monte Carlo orchestration and the expectation-decay experiments.

Per-realization seeds come from a SplitMix64 avalanche of
(master_seed + index * GOLDEN), making every realization reproducible in
isolation and the sweep independent of scheduling.  All reductions fold
results in realization-index order so that outputs are bit-stable for a
fixed configuration regardless of the worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix_seed(master_seed: int, index: int) -> int:
    """SplitMix64 finalizer of (master_seed + index * GOLDEN) mod 2^64.

    z = seed + index * 0x9E3779B97F4A7C15
    z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27; z *= 0x94D049BB133111EB
    z ^= z >> 31
    """
    z = (master_seed + index * GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


@dataclass
class RealizationFailure:
    index: int
    seed: int
    message: str


@dataclass
class MapResult:
    """Ordered per-realization outputs plus failure accounting."""

    results: list
    failures: list

    @property
    def n_total(self) -> int:
        return len(self.results) + len(self.failures)


_WORKER_FN: Optional[Callable] = None


def _init_worker(fn):
    global _WORKER_FN
    _WORKER_FN = fn


def _run_indexed(args):
    index, seed = args
    try:
        return index, _WORKER_FN(index, seed), None
    except Exception as exc:  # recorded, never silently dropped
        return index, None, f"{type(exc).__name__}: {exc}"


def ensemble_map(
    fn: Callable[[int, int], object],
    n_realizations: int,
    master_seed: int,
    workers: int = 1,
) -> MapResult:
    """Run fn(index, seed) for each realization; deterministic ordered fold."""
    tasks = [(i, mix_seed(master_seed, i)) for i in range(n_realizations)]
    outcomes: list = [None] * n_realizations
    if workers <= 1:
        for i, seed in tasks:
            try:
                outcomes[i] = (fn(i, seed), None)
            except Exception as exc:
                outcomes[i] = (None, f"{type(exc).__name__}: {exc}")
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(fn,)
        ) as pool:
            for i, res, err in pool.map(_run_indexed, tasks, chunksize=8):
                outcomes[i] = (res, err)
    results, failures = [], []
    for i, (res, err) in enumerate(outcomes):
        if err is None:
            results.append(res)
        else:
            failures.append(RealizationFailure(i, tasks[i][1], err))
    return MapResult(results=results, failures=failures)


def env_workers(default: int = 1) -> int:
    """Worker count from RANDKDV_WORKERS; recorded but never result-affecting."""
    try:
        return max(1, int(os.environ.get("RANDKDV_WORKERS", default)))
    except ValueError:
        return default
