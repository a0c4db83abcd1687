"""Backend selection for the hot kernels.

Every hot kernel has two builds with identical semantics: scalar loops
compiled with numba, and a vectorized pure-numpy fallback. ``WHEELDYN_NUMBA=0``
(or ``false``/``off``/``no``) forces the fallbacks even when numba is
installed; any other value, or leaving it unset, selects the compiled build
when numba imports. The decision is made once at import so every kernel in a
process agrees; ``benchmarks/bench_kernels.py`` times the two builds against
each other.
"""

from __future__ import annotations

import os


def _env_wants_numba():
    raw = os.environ.get("WHEELDYN_NUMBA", "1").strip().lower()
    return raw not in ("0", "false", "off", "no")


try:
    import numba
    _HAVE_NUMBA = True
except ImportError:
    numba = None
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and _env_wants_numba()


def numba_available():
    return _HAVE_NUMBA


def jit_or_none(fn):
    """The numba build of ``fn`` when the backend is active, else None."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(fn)
    return None


def select(njit_fn, numpy_fn):
    """Pick the active build; falls back to numpy when numba is off."""
    return njit_fn if njit_fn is not None else numpy_fn
