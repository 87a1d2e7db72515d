"""Deterministic chunked parallel map over horizon stages.

Per-stage work (sensitivities, cost expansions, interval rollouts) is pure
Python and GIL-bound, so parallelism uses forked worker processes. The
contiguous index ranges are computed independently and reassembled in stage
order, and the serial path runs the identical per-stage code, so results are
bit-identical for every worker count.

The payload is handed to children through fork inheritance (a module global
set right before the pool is created), which keeps closures and large arrays
out of the task pickles.
"""

from __future__ import annotations

import multiprocessing as mp
import os

from .errors import ConfigurationError

_CTX = None


def resolve_workers(workers=None):
    """Worker count: explicit argument, else OCTRL_WORKERS, else 1."""
    if workers is None:
        workers = os.environ.get("OCTRL_WORKERS", "1")
    workers = int(workers)
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    return workers


def chunk_ranges(n_items, chunks):
    """Split range(n_items) into at most ``chunks`` contiguous ranges."""
    chunks = max(1, min(chunks, n_items)) if n_items else 1
    base, extra = divmod(n_items, chunks)
    ranges = []
    lo = 0
    for c in range(chunks):
        hi = lo + base + (1 if c < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return ranges


def _run_chunk(rng):
    worker, payload = _CTX
    return worker(payload, rng[0], rng[1])


def map_stages(worker, payload, n_items, workers):
    """Run ``worker(payload, lo, hi) -> list`` over chunks of range(n_items).

    Returns the concatenated per-item results in index order.
    """
    global _CTX
    workers = resolve_workers(workers)
    if n_items == 0:
        return []
    if workers == 1 or n_items == 1 or "fork" not in mp.get_all_start_methods():
        return worker(payload, 0, n_items)
    ranges = chunk_ranges(n_items, workers)
    _CTX = (worker, payload)
    try:
        with mp.get_context("fork").Pool(len(ranges)) as pool:
            parts = pool.map(_run_chunk, ranges)
    finally:
        _CTX = None
    out = []
    for part in parts:
        out.extend(part)
    return out
