"""Sequential rollout evaluation: per-length position RMSE reports.

A rollout anchors at an observed pose, then repeatedly feeds the model its
own predictions through the egocentric bookkeeping, reading only commands
from the past of each step. Evaluation samples many such rollouts per
horizon length and reports the per-step position RMSE in millimeters,
mirroring how wheeled-robot dynamics models are compared across horizons.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, TICKS_PER_SECOND, Trajectory, rollout_start_mask
from .errors import DataError
from .kernels import dense, rollout as rk
from .models import (KINDS, ModelSpec, NORM_EPS, bins_for_ticks, estimate_twist)
from . import analytical
from .ego import MODES

DEFAULT_LENGTHS = (1, 8, 64, 512, 4096, 32768)


@dataclass(frozen=True)
class RolloutWindow:
    H: int = 1
    T: float = 0.2
    K: int = 5

    def __post_init__(self):
        if self.H < 1 or self.K < 1 or self.T <= 0.0:
            raise DataError("window must satisfy H >= 1, T > 0, K >= 1")


@dataclass
class EvalReport:
    lengths: list
    rmse_mm: list
    n_segments: list
    model_id: str = ""
    dataset_id: str = ""
    notes: list = field(default_factory=list)


def extract_segments(ds, starts, length, spec):
    """Array views of everything a batched rollout needs.

    Returns a dict with command windows per step (zero-order-hold bins at
    each step's pose timestamp), per-step dt, anchor poses, backward-difference
    twist estimates at the anchors, and the ground-truth continuation.
    """
    starts = np.asarray(starts, dtype=np.int64).reshape(-1)
    if len(starts) == 0:
        raise DataError("no rollout starts supplied")
    steps = starts[:, None] + np.arange(length)[None, :]
    tick_rows = ds.poses.ticks[steps]
    bins = bins_for_ticks(ds.cmd_ticks, ds.cmd_vals, tick_rows.ravel(), spec.T, spec.K)
    bins = bins.reshape(len(starts), length, spec.K * 2)
    dt = (ds.poses.ticks[steps + 1] - tick_rows) / TICKS_PER_SECOND
    return {
        "starts": starts,
        "bins": np.ascontiguousarray(bins),
        "dt": np.ascontiguousarray(dt),
        "start_pose": np.ascontiguousarray(ds.poses.xytheta[starts]),
        "twist0": estimate_twist(ds.poses, starts),
        "targets": np.ascontiguousarray(ds.poses.xytheta[steps + 1]),
        "ticks": tick_rows,
    }


def _kernel_args(spec):
    """Collapsed weights plus scalars in the layout the rollout kernel takes."""
    layers = dense.collapse_eval_net(spec)
    dummy_W = np.zeros((1, 1))
    dummy_b = np.zeros(1)
    Ws = [dummy_W] * 4
    bs = [dummy_b] * 4
    for i, (W, b) in enumerate(layers):
        Ws[i] = np.ascontiguousarray(W)
        bs[i] = np.ascontiguousarray(b)
    inv_std = 1.0 / np.sqrt(spec.norm_var + NORM_EPS)
    r = spec.robot
    return {
        "mean": spec.norm_mean, "inv_std": inv_std,
        "W1": Ws[0], "b1": bs[0], "W2": Ws[1], "b2": bs[1],
        "W3": Ws[2], "b3": bs[2], "W4": Ws[3], "b4": bs[3],
        "n_layers": np.int64(len(layers)),
        "tau_s": float(r.tau_s), "tau_w": float(r.tau_w),
        "gain_s": float(r.slip_gain_s), "gain_w": float(r.slip_gain_w),
        "j_lat": np.int64(analytical.latency_bin(spec.K, spec.T, r.cmd_latency)),
    }


def rollout_batch(spec, ds, starts, length, seg=None):
    """Global-frame predictions (B, length, 3) for a batch of rollout starts.

    Fast path for single-pose history; longer histories fall back to the
    scalar reference engine one start at a time.
    """
    if spec.H != 1:
        from .reference import reference_rollout
        starts = np.asarray(starts, dtype=np.int64).reshape(-1)
        return np.stack([reference_rollout(spec, ds, int(k), length).xytheta
                         for k in starts])
    if seg is None:
        seg = extract_segments(ds, starts, length, spec)
    ka = _kernel_args(spec)
    return rk.rollout_kernel(np.int64(KINDS.index(spec.kind)),
                             np.int64(MODES.index(spec.mode)),
                             seg["bins"], seg["dt"], seg["start_pose"], seg["twist0"],
                             ka["mean"], ka["inv_std"],
                             ka["W1"], ka["b1"], ka["W2"], ka["b2"],
                             ka["W3"], ka["b3"], ka["W4"], ka["b4"],
                             ka["n_layers"], ka["tau_s"], ka["tau_w"],
                             ka["gain_s"], ka["gain_w"], ka["j_lat"])


def rollout(spec, ds, k, n):
    """Roll the model ``n`` steps from pose index ``k``.

    Returns the predicted trajectory on the dataset's own pose timestamps
    (indices k+1 .. k+n). Only poses up to ``k`` and commands up to each
    step's time are read. Raises when the start lacks command history or
    the horizon leaves the data.
    """
    if n < 1:
        raise DataError("rollout length must be at least 1")
    mask = rollout_start_mask(ds, n, window_s=spec.T, history=spec.H)
    if k < 0 or k >= len(mask):
        raise DataError(f"start index {k} out of range")
    if not mask[k]:
        raise DataError(f"start index {k} lacks command history or in-segment room "
                        f"for a {n}-step rollout")
    preds = rollout_batch(spec, ds, np.array([k]), n)[0]
    t = ds.poses.t[k + 1:k + 1 + n]
    ticks = ds.poses.ticks[k + 1:k + 1 + n]
    return Trajectory(t, preds, np.array([0], dtype=np.int64), ticks=ticks, validate=False)


def stride_starts(ds, length, spec, max_segments=256):
    """Deterministic evaluation starts: evenly strided over all valid anchors."""
    mask = rollout_start_mask(ds, length, window_s=spec.T, history=spec.H)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        return idx
    if len(idx) <= max_segments:
        return idx
    stride = len(idx) / max_segments
    return idx[np.asarray(np.floor(np.arange(max_segments) * stride), dtype=np.int64)]


def rmse_by_length(spec, ds, lengths=None, max_segments=256, seed=0):
    """Per-horizon position RMSE, averaged over strided test segments.

    For each length L: roll out from up to ``max_segments`` anchors, take
    sqrt(mean over steps of squared planar position error) per segment,
    average across segments, report millimeters. Heading error is excluded.
    Lengths with no room in the data are skipped with a note. Segment
    anchors are chosen by deterministic stride, so reports need no seed; the
    argument is accepted for interface stability.
    """
    del seed
    lengths = sorted(DEFAULT_LENGTHS if lengths is None else lengths)
    out = EvalReport(lengths=[], rmse_mm=[], n_segments=[])
    for L in lengths:
        starts = stride_starts(ds, L, spec, max_segments)
        if len(starts) == 0:
            out.notes.append(f"length {L}: skipped, no segment long enough")
            continue
        seg = extract_segments(ds, starts, L, spec)
        preds = rollout_batch(spec, ds, starts, L, seg=seg)
        err = preds[:, :, :2] - seg["targets"][:, :, :2]
        per_seg = np.sqrt(np.mean(np.sum(err * err, axis=2), axis=1))
        out.lengths.append(int(L))
        out.rmse_mm.append(float(per_seg.mean() * 1000.0))
        out.n_segments.append(int(len(starts)))
    return out


def save_report(report, path):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("length,rmse_mm,n_segments\n")
        for L, r, n in zip(report.lengths, report.rmse_mm, report.n_segments):
            fh.write(f"{L},{r:.9f},{n}\n")
        for note in report.notes:
            fh.write(f"# {note}\n")
    os.replace(tmp, path)


def load_report(path):
    report = EvalReport(lengths=[], rmse_mm=[], n_segments=[])
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "length,rmse_mm,n_segments":
            raise DataError(f"unrecognized report header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                if line.startswith("#"):
                    report.notes.append(line[1:].strip())
                continue
            L, r, n = line.split(",")
            report.lengths.append(int(L))
            report.rmse_mm.append(float(r))
            report.n_segments.append(int(n))
    return report


def compare_reports(a, b, name_a="a", name_b="b"):
    """Per-length winner and RMSE ratio between two reports.

    Returns a list of dict rows; ratio is a over b, winner is the smaller
    RMSE. Reports must cover identical lengths.
    """
    if a.lengths != b.lengths:
        raise DataError(f"reports cover different lengths: {a.lengths} vs {b.lengths}")
    rows = []
    for L, ra, rb in zip(a.lengths, a.rmse_mm, b.rmse_mm):
        ratio = ra / rb if rb > 0 else float("inf") if ra > 0 else 1.0
        rows.append({"length": L, f"rmse_{name_a}": ra, f"rmse_{name_b}": rb,
                     "ratio": ratio, "winner": name_a if ra <= rb else name_b})
    return rows


def save_comparison(rows, path, name_a="a", name_b="b"):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(f"length,rmse_{name_a},rmse_{name_b},ratio,winner\n")
        for r in rows:
            fh.write(f"{r['length']},{r[f'rmse_{name_a}']:.9f},{r[f'rmse_{name_b}']:.9f},"
                     f"{r['ratio']:.9f},{r['winner']}\n")
    os.replace(tmp, path)
