"""Time the numba kernels against their pure-numpy fallbacks.

Run directly: ``python3 benchmarks/bench_kernels.py [--reps 5]``. Each hot
kernel exists in two builds selected at import time by the WHEELDYN_NUMBA
environment flag; this script times both builds on identical inputs and
prints the speedup, so regressions in either path are visible.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from wheeldyn.kernels import chains, rollout as rk
from wheeldyn.kernels.backend import NUMBA_ENABLED

B, L, K = 64, 2048, 5


def _chain_inputs(rng):
    return {
        "twist_chain_fwd": (rng.normal(size=B), rng.normal(size=(B, L)),
                            rng.uniform(0.1, 1.0, (B, L)), rng.normal(size=(B, L))),
        "twist_chain_bwd": (rng.normal(size=(B, L)),
                            rng.uniform(0.1, 1.0, (B, L)), np.int64(64)),
        "offset_chain_fwd": (rng.normal(size=(B, 3)),
                             0.01 * rng.normal(size=(B, L, 3))),
    }


def _offset_bwd_inputs(rng):
    start = rng.normal(size=(B, 3))
    r = 0.01 * rng.normal(size=(B, L, 3))
    g = chains.offset_chain_fwd(start, r)
    ag = rng.normal(size=(B, L, 3))
    return start, r, g, ag, np.int64(64)


def _lr_seq_inputs(rng):
    D = 13
    feats = np.zeros((B, L, D))
    feats[:, :, 3:] = rng.normal(size=(B, L, D - 3))
    return (np.int64(2), rng.normal(size=(3, D)) * 0.01, rng.normal(size=3) * 0.01,
            feats, np.zeros(D), np.ones(D), rng.normal(size=(B, 3)),
            rng.normal(size=(B, L, 3)), np.int64(64))


def _rollout_inputs(rng):
    D = 13
    bins = rng.normal(size=(B, L, 2 * K))
    dt = np.full((B, L), 1.0 / 60.0)
    start = rng.normal(size=(B, 3))
    twist0 = rng.normal(size=(B, 2))
    dummy = np.zeros((1, 1))
    dummyb = np.zeros(1)
    return (np.int64(0), np.int64(0), bins, dt, start, twist0,
            np.zeros(D), np.ones(D), 0.01 * rng.normal(size=(3, D)),
            np.zeros(3), dummy, dummyb, dummy, dummyb, dummy, dummyb,
            np.int64(1), 0.1, 0.1, 1.0, 1.0, np.int64(4))


def _time(fn, args, reps):
    fn(*args)  # warm-up (and numba compile)
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=5)
    opts = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = []
    ci = _chain_inputs(rng)
    for name, pair in chains.BENCH_PAIRS.items():
        cases.append((name, pair, ci.get(name) or _offset_bwd_inputs(rng)))
    cases.append(("lr_seq", (chains.lr_seq_njit, chains._lr_seq_loops),
                  _lr_seq_inputs(rng)))
    for name, pair in rk.BENCH_PAIRS.items():
        cases.append((name, pair, _rollout_inputs(rng)))
    print(f"numba enabled: {NUMBA_ENABLED}  (B={B}, L={L})")
    print(f"{'kernel':<20}{'njit ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, (njit_fn, numpy_fn), args in cases:
        # sequential kernels mutate their feature buffer; give each build its own
        t_np = _time(numpy_fn, [a.copy() if isinstance(a, np.ndarray) else a
                                for a in args], opts.reps)
        if njit_fn is None:
            print(f"{name:<20}{'n/a':>12}{t_np * 1e3:>12.3f}{'-':>10}")
            continue
        t_nj = _time(njit_fn, [a.copy() if isinstance(a, np.ndarray) else a
                               for a in args], opts.reps)
        print(f"{name:<20}{t_nj * 1e3:>12.3f}{t_np * 1e3:>12.3f}"
              f"{t_np / t_nj:>10.2f}")


if __name__ == "__main__":
    main()
