"""Deterministic fan-out of independent realizations to worker processes.

Workers are spawned (not forked) with the BLAS thread pools pinned to one
thread, so a realization computes bit-identical results no matter how many
workers run or which worker picks it up.  The parent reduces results in
realization order, making the whole pipeline independent of scheduling.
"""

from __future__ import annotations

import multiprocessing as mp
import os

__all__ = ["default_workers", "run_ordered"]

_PIN_VARS = ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS")


def default_workers() -> int:
    env = os.environ.get("QUENCHLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))


def run_ordered(func, arg_tuples, workers: int | None = None) -> list:
    """Apply ``func`` to each argument tuple; return results in input order.

    ``workers >= 1`` runs in a spawned pool with single-threaded BLAS in each
    worker (the reproducible mode used by the command line runner);
    ``workers = 0`` runs in-process, which is faster to start but inherits
    whatever BLAS threading the parent uses.
    """
    arg_tuples = list(arg_tuples)
    if workers is None:
        workers = default_workers()
    if workers == 0:
        return [func(*args) for args in arg_tuples]

    saved = {k: os.environ.get(k) for k in _PIN_VARS}
    for k in _PIN_VARS:
        os.environ[k] = "1"
    try:
        ctx = mp.get_context("spawn")
        with ctx.Pool(processes=min(workers, len(arg_tuples))) as pool:
            return pool.starmap(func, arg_tuples, chunksize=1)
    finally:
        for k, v in saved.items():
            if v is None:
                os.environ.pop(k, None)
            else:
                os.environ[k] = v
