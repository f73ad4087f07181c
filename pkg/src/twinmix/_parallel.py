"""Deterministic per-replicate random streams and an order-preserving map."""

import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def key_id(key):
    """Stable 32-bit id of a cell key (any object with a stable ``repr``)."""
    return zlib.crc32(repr(key).encode("utf-8"))


def stream(seed, *key):
    """Generator for ``(seed, *key)``; independent of scheduling order.

    Non-integer key parts are hashed with :func:`key_id`.
    """
    parts = tuple(int(k) if isinstance(k, (int, np.integer)) else key_id(k) for k in key)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=parts)))


def pmap(fn, items, threads=1):
    """``list(map(fn, items))``, optionally on a thread pool; output order is input order.

    The numba kernels release the GIL, so threads give real parallelism there.
    """
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as ex:
        return list(ex.map(fn, items))
