"""Performance kernels: the sequential recursions and batched passes that
dominate training and evaluation time.

Each hot kernel exists twice: a numba ``@njit`` build and a pure-numpy
fallback with identical semantics. The active backend is chosen once at
import from the ``WHEELDYN_NUMBA`` environment variable (see ``backend``);
``benchmarks/bench_kernels.py`` times one against the other.
"""

from .backend import NUMBA_ENABLED, numba_available
from . import chains, dense, rollout

__all__ = ["NUMBA_ENABLED", "numba_available", "chains", "dense", "rollout"]
