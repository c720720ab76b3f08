"""Per-path random streams and the path-parallel runner.

Path ``i`` of a run with master seed ``s`` draws from
``Philox(key=(s, tag, i))``: a counter-based generator whose key fully
determines the stream.  Results therefore do not depend on how paths are
split into blocks or spread over workers, and reductions are done on the
full per-path array with exactly rounded sums.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from numba import typed

BLOCK = 1024
MAX_SEED = 2**64 - 1

# purpose tags keep the streams of different estimators of one run disjoint
TAG_MAIN = 0
TAG_FIXED_POINT_RHS = 1
TAG_GRID_BASE = 16


def grid_tag(i: int) -> int:
    """Tag of grid point ``i`` when grid estimates must be independent of each other."""
    return TAG_GRID_BASE + int(i)


def stream_key(seed: int, path_index: int, tag: int = TAG_MAIN) -> int:
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    if not 0 <= path_index < 2**40 or not 0 <= tag < 2**24:
        raise ValueError("path index or stream tag out of range")
    return (int(seed) << 64) | (int(tag) << 40) | int(path_index)


def path_generator(seed: int, path_index: int, tag: int = TAG_MAIN) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, path_index, tag)))


def generators(seed: int, start: int, stop: int, tag: int = TAG_MAIN):
    return typed.List([path_generator(seed, i, tag) for i in range(start, stop)])

def _run_block(job):
    from . import _kernels

    name, args, trailing, seed, tag, start, stop, width = job
    out = np.zeros((stop - start, width))
    getattr(_kernels, name)(generators(seed, start, stop, tag), *args, out, *trailing)
    return start, out


def run_paths(kernel: str, args, paths: int, seed: int, width: int, tag: int = TAG_MAIN, workers: int = 1,
              trailing=()) -> np.ndarray:
    """Run the named kernel ``kernel(rngs, *args, out, *trailing)`` over ``paths`` paths.

    Returns the per-path rows stacked in path order.
    """
    if paths < 1:
        raise ValueError("paths must be >= 1")
    jobs = [(kernel, args, tuple(trailing), seed, tag, s, min(s + BLOCK, paths), width) for s in range(0, paths, BLOCK)]
    out = np.zeros((paths, width))
    if workers <= 1 or len(jobs) == 1:
        for job in jobs:
            start, rows = _run_block(job)
            out[start : start + rows.shape[0]] = rows
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for start, rows in pool.map(_run_block, jobs):
                out[start : start + rows.shape[0]] = rows
    return out


def mean_and_stderr(values: np.ndarray) -> tuple[float, float]:
    """Exactly rounded mean and CLT standard error (sample std / sqrt(N))."""
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))
