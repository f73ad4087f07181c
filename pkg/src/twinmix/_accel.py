"""Optional numba acceleration.

Hot kernels are decorated with :func:`jit`. When numba is importable and the
environment variable ``TWINMIX_DISABLE_NUMBA`` is unset (or ``0``), they are
compiled with ``numba.njit``; otherwise the very same source runs as plain
vectorised numpy.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

_flag = os.environ.get("TWINMIX_DISABLE_NUMBA", "0").strip().lower()
NUMBA_ENABLED = numba is not None and _flag in ("", "0", "false", "no")


def jit(fn=None, **kwargs):
    """``numba.njit(cache=True, nogil=True)`` or identity, depending on the flag."""
    opts = {"cache": True, "nogil": True}
    opts.update(kwargs)

    def wrap(f):
        if NUMBA_ENABLED:
            return numba.njit(**opts)(f)
        return f

    if fn is not None:
        return wrap(fn)
    return wrap
