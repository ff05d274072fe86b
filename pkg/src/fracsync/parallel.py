"""Fork-based worker pool for ensemble chunks.

Tasks are arbitrary callables (including closures): the task is stashed in a
module global before the pool forks, so children inherit it without pickling.
Results come back in submission order, and per-realization seeds are derived
from indices, so the output is independent of worker assignment.
"""

from __future__ import annotations

import multiprocessing
import os

__all__ = ["resolve_workers", "run_chunked"]

_TASK = None


def _trampoline(arg):
    return _TASK(arg)


def resolve_workers(requested: int | None) -> int:
    """0 or None means all cores; FRACSYNC_THREADS overrides everything."""
    env = os.environ.get("FRACSYNC_THREADS")
    if env:
        return max(1, int(env))
    if not requested:
        return os.cpu_count() or 1
    return max(1, int(requested))


def run_chunked(task, chunks, workers: int) -> list:
    global _TASK
    if workers <= 1 or len(chunks) <= 1:
        return [task(c) for c in chunks]
    _TASK = task
    try:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=min(workers, len(chunks))) as pool:
            return pool.map(_trampoline, chunks)
    finally:
        _TASK = None
