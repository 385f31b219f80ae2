"""Shared small helpers."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["thread_count", "parallel_map"]


def thread_count() -> int:
    """Worker count for fan-out loops, capped by STRUCTHINF_THREADS."""
    env = os.environ.get("STRUCTHINF_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(32, os.cpu_count() or 1)


def parallel_map(fn, items) -> list:
    """Map preserving order; threaded when more than one worker is allowed.

    Results are merged in input order regardless of completion order, so
    output is deterministic whenever ``fn`` is.
    """
    items = list(items)
    workers = thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
