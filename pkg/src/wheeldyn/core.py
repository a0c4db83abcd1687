"""Pose and command stream containers with file I/O and time-block splitting.

All timestamps are stored twice: as float seconds (for arithmetic in model
code) and as int64 microsecond ticks (for windowing, binning, and interval
searches). Tick arithmetic is exact under time translation, so any logic
routed through ticks is reproducible bit for bit when a constant offset is
added to every timestamp. Floats are converted to ticks exactly once, at
construction; derived quantities never re-round.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

TICKS_PER_SECOND = 1_000_000

# Longest command window any model family uses, seconds. Rollout starts are
# only valid once this much command history exists inside the segment.
DEFAULT_WINDOW_S = 0.2


def to_ticks(t):
    """Convert float seconds (scalar or array) to int64 microsecond ticks."""
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise DataError("timestamps must be finite")
    return np.asarray(np.rint(t * TICKS_PER_SECOND), dtype=np.int64)


def ticks_to_seconds(ticks):
    return np.asarray(ticks, dtype=np.float64) / TICKS_PER_SECOND


@dataclass(frozen=True)
class Pose:
    """Planar pose: position in meters, heading in radians (unwrapped)."""

    x: float
    y: float
    theta: float

    def as_array(self):
        return np.array([self.x, self.y, self.theta], dtype=np.float64)


@dataclass(frozen=True)
class TimedPose:
    t: float
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class ChassisTwist:
    """Body-frame velocity: forward speed (m/s) and yaw rate (rad/s)."""

    s: float
    omega: float


@dataclass(frozen=True)
class Command:
    """Commanded chassis twist, stamped with its issue time."""

    t: float
    s_c: float
    omega_c: float


def unwrap_theta(theta):
    """Remove 2*pi jumps so consecutive heading samples differ by < pi."""
    return np.unwrap(np.asarray(theta, dtype=np.float64))


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise DataError(f"{name} contains a non-finite value at index {bad}")


class Trajectory:
    """Timestamped pose sequence, possibly stitched from disjoint segments.

    ``segment_starts`` marks indices where temporal continuity breaks (always
    includes 0). Within a segment timestamps increase strictly and spacing is
    approximately uniform; nothing is assumed across a seam.
    """

    __slots__ = ("t", "ticks", "xytheta", "segment_starts")

    def __init__(self, t, xytheta, segment_starts=None, *, ticks=None,
                 max_jitter_ratio=1.5, validate=True):
        self.t = np.ascontiguousarray(t, dtype=np.float64)
        self.xytheta = np.ascontiguousarray(xytheta, dtype=np.float64)
        if self.xytheta.ndim != 2 or self.xytheta.shape[1] != 3:
            raise DataError(f"pose array must have shape (n, 3), got {self.xytheta.shape}")
        if self.t.shape[0] != self.xytheta.shape[0]:
            raise DataError("timestamp and pose arrays disagree in length")
        self.ticks = to_ticks(self.t) if ticks is None else np.ascontiguousarray(ticks, dtype=np.int64)
        if segment_starts is None:
            segment_starts = np.array([0], dtype=np.int64) if len(self.t) else np.empty(0, dtype=np.int64)
        self.segment_starts = np.ascontiguousarray(segment_starts, dtype=np.int64)
        if validate:
            self._validate(max_jitter_ratio)

    def _validate(self, max_jitter_ratio):
        n = len(self.t)
        if n == 0:
            return
        _check_finite("pose timestamps", self.t)
        _check_finite("poses", self.xytheta)
        if self.segment_starts[0] != 0:
            raise DataError("segment_starts must begin with index 0")
        if np.any(np.diff(self.segment_starts) <= 0) or np.any(self.segment_starts >= n):
            raise DataError("segment_starts must be strictly increasing and in range")
        bounds = np.append(self.segment_starts, n)
        for a, b in zip(bounds[:-1], bounds[1:]):
            dticks = np.diff(self.ticks[a:b])
            if dticks.size == 0:
                continue
            if np.any(dticks <= 0):
                row = a + int(np.flatnonzero(dticks <= 0)[0]) + 1
                raise DataError(f"timestamps must increase strictly: violation at row {row}")
            med = float(np.median(dticks))
            if float(dticks.max()) > max_jitter_ratio * med:
                row = a + int(np.argmax(dticks)) + 1
                raise DataError(
                    f"pose spacing jitter exceeds {max_jitter_ratio:.2f}x the median "
                    f"interval at row {row}")

    def __len__(self):
        return len(self.t)

    def segment_bounds(self):
        """Yield (start, stop) index pairs, one per contiguous segment."""
        bounds = np.append(self.segment_starts, len(self.t))
        return list(zip(bounds[:-1].tolist(), bounds[1:].tolist()))

    def segment_of(self, index):
        """Segment ordinal containing a pose index."""
        return int(np.searchsorted(self.segment_starts, index, side="right") - 1)

    def pose(self, index):
        x, y, th = self.xytheta[index]
        return Pose(float(x), float(y), float(th))

    def timed_pose(self, index):
        x, y, th = self.xytheta[index]
        return TimedPose(float(self.t[index]), float(x), float(y), float(th))

    def shifted(self, dt_seconds):
        """Copy with all timestamps translated by a constant offset."""
        dticks = int(np.rint(dt_seconds * TICKS_PER_SECOND))
        return Trajectory(self.t + dt_seconds, self.xytheta.copy(),
                          self.segment_starts.copy(), ticks=self.ticks + dticks,
                          validate=False)


class Dataset:
    """A pose trajectory plus the asynchronous command stream that drove it.

    Commands are stored as parallel arrays (``cmd_t``, ``cmd_ticks``,
    ``cmd_vals`` with columns s_c, omega_c) sorted by time. ``meta`` carries
    free-form provenance: collection rates, velocity limits, segment notes.
    ``latent`` optionally holds the noise-free pose trajectory when the data
    came from a simulator that knows it.
    """

    def __init__(self, poses, cmd_t, cmd_vals, meta=None, latent=None, *,
                 cmd_ticks=None, validate=True):
        self.poses = poses
        self.cmd_t = np.ascontiguousarray(cmd_t, dtype=np.float64)
        self.cmd_vals = np.ascontiguousarray(cmd_vals, dtype=np.float64)
        self.cmd_ticks = to_ticks(self.cmd_t) if cmd_ticks is None else np.ascontiguousarray(cmd_ticks, dtype=np.int64)
        self.meta = dict(meta) if meta else {}
        self.latent = latent
        if validate:
            self._validate()

    def _validate(self):
        if self.cmd_vals.ndim != 2 or self.cmd_vals.shape[1] != 2:
            raise DataError(f"command array must have shape (m, 2), got {self.cmd_vals.shape}")
        if self.cmd_t.shape[0] != self.cmd_vals.shape[0]:
            raise DataError("command timestamp and value arrays disagree in length")
        if len(self.poses) == 0:
            raise DataError("dataset pose stream is empty")
        if len(self.cmd_t) == 0:
            raise DataError("dataset command stream is empty")
        _check_finite("command timestamps", self.cmd_t)
        _check_finite("commands", self.cmd_vals)
        dticks = np.diff(self.cmd_ticks)
        if np.any(dticks <= 0):
            row = int(np.flatnonzero(dticks <= 0)[0]) + 1
            raise DataError(f"command timestamps must increase strictly: violation at row {row}")
        s_max = self.meta.get("s_max")
        omega_max = self.meta.get("omega_max")
        if s_max is not None and len(self.cmd_t):
            if float(np.abs(self.cmd_vals[:, 0]).max()) > float(s_max) + 1e-9:
                raise DataError("command speed exceeds configured s_max")
        if omega_max is not None and len(self.cmd_t):
            if float(np.abs(self.cmd_vals[:, 1]).max()) > float(omega_max) + 1e-9:
                raise DataError("command yaw rate exceeds configured omega_max")
        if len(self.poses) and len(self.cmd_t):
            if self.cmd_ticks[0] > self.poses.ticks[-1] or self.cmd_ticks[-1] < self.poses.ticks[0]:
                raise DataError("pose and command time ranges do not overlap")
        if self.latent is not None and len(self.latent) != len(self.poses):
            raise DataError("latent trajectory length must match observed poses")

    @property
    def commands(self):
        return [Command(float(t), float(s), float(w))
                for t, (s, w) in zip(self.cmd_t, self.cmd_vals)]

    def command(self, index):
        s, w = self.cmd_vals[index]
        return Command(float(self.cmd_t[index]), float(s), float(w))

    def shifted(self, dt_seconds):
        dticks = int(np.rint(dt_seconds * TICKS_PER_SECOND))
        latent = self.latent.shifted(dt_seconds) if self.latent is not None else None
        return Dataset(self.poses.shifted(dt_seconds), self.cmd_t + dt_seconds,
                       self.cmd_vals.copy(), dict(self.meta), latent,
                       cmd_ticks=self.cmd_ticks + dticks, validate=False)


def rollout_start_mask(ds, length, window_s=DEFAULT_WINDOW_S, warmup_s=None, history=1):
    """Boolean mask over pose indices that can anchor a ``length``-step rollout.

    A start k is valid when k..k+length stay inside one segment, the pose has
    at least ``history - 1`` in-segment predecessors, at least ``warmup_s``
    seconds of the segment precede it (so command windows never reach across
    a seam), and a command exists at or before the earliest window edge.
    """
    if warmup_s is None:
        warmup_s = window_s + 0.1
    n = len(ds.poses)
    mask = np.zeros(n, dtype=bool)
    if n == 0:
        return mask
    warm_ticks = int(np.rint(warmup_s * TICKS_PER_SECOND))
    for a, b in ds.poses.segment_bounds():
        hi = b - length
        lo = a + history - 1
        if hi <= lo:
            continue
        seg0 = ds.poses.ticks[a]
        ok = ds.poses.ticks[lo:hi] - seg0 >= warm_ticks
        mask[lo:hi] = ok
    if mask.any():
        win_ticks = int(np.rint(window_s * TICKS_PER_SECOND))
        idx = np.flatnonzero(mask)
        have_cmd = np.searchsorted(ds.cmd_ticks, ds.poses.ticks[idx] - win_ticks, side="right") >= 1
        mask[idx[~have_cmd]] = False
    return mask


# ---------------------------------------------------------------------------
# File I/O. Layout: a directory holding poses.csv (t,x,y,theta), commands.csv
# (t,s_c,omega_c), meta.txt (key=value lines), and optionally latent.csv with
# the same schema as poses.csv.
# ---------------------------------------------------------------------------

_POSE_HEADER = "t,x,y,theta"
_CMD_HEADER = "t,s_c,omega_c"


def _format_row(values):
    return ",".join(f"{v:.9f}" for v in values)


def _write_csv(path, header, t, vals):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(len(t)):
            fh.write(f"{t[i]:.9f}," + _format_row(vals[i]) + "\n")


def _read_csv(path, header, ncols):
    if not os.path.exists(path):
        raise DataError(f"missing data file: {path}")
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first.replace(" ", "") != header:
            raise DataError(f"{os.path.basename(path)}: expected header '{header}', got '{first}'")
        t, vals = [], []
        for row, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != ncols + 1:
                raise DataError(f"{os.path.basename(path)} row {row}: expected "
                                f"{ncols + 1} fields, got {len(parts)}")
            try:
                nums = [float(p) for p in parts]
            except ValueError as exc:
                raise DataError(f"{os.path.basename(path)} row {row}: {exc}") from None
            if not all(math.isfinite(v) for v in nums):
                raise DataError(f"{os.path.basename(path)} row {row}: non-finite value")
            t.append(nums[0])
            vals.append(nums[1:])
    return (np.array(t, dtype=np.float64),
            np.array(vals, dtype=np.float64).reshape(len(t), ncols))


def _meta_to_str(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(str(int(v)) for v in value)
    return str(value)


def _meta_from_str(key, raw):
    if key in ("segments",):
        return np.array([int(v) for v in raw.split(",")], dtype=np.int64) if raw else np.empty(0, np.int64)
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def save_dataset(ds, path):
    """Write a dataset directory. Floats use 9 decimal places, which keeps
    absolute round-trip error below 1e-9 for the value ranges involved."""
    os.makedirs(path, exist_ok=True)
    _write_csv(os.path.join(path, "poses.csv"), _POSE_HEADER, ds.poses.t, ds.poses.xytheta)
    _write_csv(os.path.join(path, "commands.csv"), _CMD_HEADER, ds.cmd_t, ds.cmd_vals)
    if ds.latent is not None:
        _write_csv(os.path.join(path, "latent.csv"), _POSE_HEADER, ds.latent.t, ds.latent.xytheta)
    meta = dict(ds.meta)
    meta["segments"] = ds.poses.segment_starts
    with open(os.path.join(path, "meta.txt"), "w") as fh:
        for key in sorted(meta):
            fh.write(f"{key}={_meta_to_str(meta[key])}\n")


def load_dataset(path):
    """Read a dataset directory written by :func:`save_dataset`.

    Heading is unwrapped per segment on load; all other columns are taken
    verbatim. Parse failures raise :class:`DataError` naming the file and row.
    """
    pose_t, pose_vals = _read_csv(os.path.join(path, "poses.csv"), _POSE_HEADER, 3)
    cmd_t, cmd_vals = _read_csv(os.path.join(path, "commands.csv"), _CMD_HEADER, 2)
    meta = {}
    meta_path = os.path.join(path, "meta.txt")
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            for row, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                if "=" not in line:
                    raise DataError(f"meta.txt row {row}: expected key=value")
                key, raw = line.split("=", 1)
                meta[key.strip()] = _meta_from_str(key.strip(), raw.strip())
    segments = meta.pop("segments", None)
    if segments is not None and len(segments) == 0:
        segments = None
    bounds = (np.append(segments, len(pose_t)) if segments is not None
              else np.array([0, len(pose_t)], dtype=np.int64))
    for a, b in zip(bounds[:-1], bounds[1:]):
        pose_vals[a:b, 2] = unwrap_theta(pose_vals[a:b, 2])
    poses = Trajectory(pose_t, pose_vals, segments)
    latent = None
    latent_path = os.path.join(path, "latent.csv")
    if os.path.exists(latent_path):
        lat_t, lat_vals = _read_csv(latent_path, _POSE_HEADER, 3)
        for a, b in zip(bounds[:-1], bounds[1:]):
            lat_vals[a:b, 2] = unwrap_theta(lat_vals[a:b, 2])
        latent = Trajectory(lat_t, lat_vals, segments)
    return Dataset(poses, cmd_t, cmd_vals, meta, latent)


# ---------------------------------------------------------------------------
# Train/test splitting by contiguous time blocks.
# ---------------------------------------------------------------------------

@dataclass
class SplitResult:
    train: Dataset
    test: Dataset
    test_block_ids: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))


def _subset(ds, keep_pose, keep_cmd, keep_latent_ok=True):
    idx = np.flatnonzero(keep_pose)
    src_seg = np.zeros(len(ds.poses), dtype=bool)
    src_seg[ds.poses.segment_starts] = True
    starts = [0]
    for j in range(1, len(idx)):
        if idx[j] - idx[j - 1] != 1 or src_seg[idx[j]]:
            starts.append(j)
    seg = np.array(starts, dtype=np.int64) if len(idx) else np.empty(0, np.int64)
    poses = Trajectory(ds.poses.t[idx], ds.poses.xytheta[idx], seg,
                       ticks=ds.poses.ticks[idx], validate=False)
    latent = None
    if ds.latent is not None and keep_latent_ok:
        latent = Trajectory(ds.latent.t[idx], ds.latent.xytheta[idx], seg,
                            ticks=ds.latent.ticks[idx], validate=False)
    cidx = np.flatnonzero(keep_cmd)
    return Dataset(poses, ds.cmd_t[cidx], ds.cmd_vals[cidx], dict(ds.meta), latent,
                   cmd_ticks=ds.cmd_ticks[cidx], validate=False)


def split_dataset(ds, test_fraction=0.3, seed=0, block_s=30.0):
    """Partition a dataset into train and test by whole time blocks.

    The pose span is cut into ``block_s``-second blocks (per segment, so
    blocks never straddle a seam) and a seeded choice of whole blocks forms
    the test set. Every pose and command lands in exactly one side; block
    membership is decided in tick space.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(ds.poses)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    block_ticks = int(np.rint(block_s * TICKS_PER_SECOND))
    if block_ticks <= 0:
        raise DataError("block_s must be positive")

    # Label every pose and command with a globally unique block id.
    pose_block = np.empty(n, dtype=np.int64)
    cmd_block = np.full(len(ds.cmd_t), -1, dtype=np.int64)
    next_block = 0
    bounds = ds.poses.segment_bounds()
    for a, b in bounds:
        seg0 = ds.poses.ticks[a]
        local = (ds.poses.ticks[a:b] - seg0) // block_ticks
        pose_block[a:b] = next_block + local
        seg_end = ds.poses.ticks[b - 1]
        lo = np.searchsorted(ds.cmd_ticks, seg0, side="left")
        hi = np.searchsorted(ds.cmd_ticks, seg_end, side="right")
        cmd_block[lo:hi] = next_block + (ds.cmd_ticks[lo:hi] - seg0) // block_ticks
        next_block += int(local[-1]) + 1
    # Commands outside every segment's span attach to the nearest block below.
    stray = np.flatnonzero(cmd_block < 0)
    if len(stray):
        pose_of = np.searchsorted(ds.poses.ticks, ds.cmd_ticks[stray], side="right") - 1
        cmd_block[stray] = pose_block[np.clip(pose_of, 0, n - 1)]

    n_blocks = next_block
    n_test = int(np.rint(test_fraction * n_blocks))
    n_test = min(max(n_test, 1), n_blocks - 1)
    rng = np.random.default_rng(seed)
    test_ids = np.sort(rng.choice(n_blocks, size=n_test, replace=False))
    is_test = np.zeros(n_blocks, dtype=bool)
    is_test[test_ids] = True

    train = _subset(ds, ~is_test[pose_block], ~is_test[cmd_block])
    test = _subset(ds, is_test[pose_block], is_test[cmd_block])
    return SplitResult(train=train, test=test, test_block_ids=test_ids)
