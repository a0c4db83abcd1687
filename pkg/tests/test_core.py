import math
import os

import numpy as np
import pytest

from wheeldyn.core import (Command, Dataset, Pose, Trajectory, load_dataset,
                           rollout_start_mask, save_dataset, split_dataset,
                           ticks_to_seconds, to_ticks, unwrap_theta)
from wheeldyn.errors import DataError


def small_dataset(n=240, rate=60.0, cmd_rate=25.0, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    th = np.cumsum(rng.normal(0, 0.02, n))
    xy = np.cumsum(rng.normal(0, 0.002, (n, 2)), axis=0)
    poses = Trajectory(t, np.column_stack([xy, th]))
    m = int(n / rate * cmd_rate)
    cmd_t = np.arange(m) / cmd_rate
    cmd_vals = np.column_stack([rng.uniform(0, 1, m), rng.uniform(-1, 1, m)])
    return Dataset(poses, cmd_t, cmd_vals,
                   {"pose_rate_hz": rate, "command_rate_hz": cmd_rate})


def test_tick_roundtrip():
    # internal clock is an int64 microsecond grid: half-tick accuracy
    t = np.array([0.0, 1 / 60, 2 / 60, 1.0, 1000.0])
    assert np.allclose(ticks_to_seconds(to_ticks(t)), t, atol=5e-7)
    assert to_ticks(np.array([1 / 60]))[0] == 16667


def test_trajectory_rejects_bad_shapes_and_order():
    with pytest.raises(DataError):
        Trajectory(np.array([0.0, 1.0]), np.zeros((2, 2)))
    with pytest.raises(DataError):
        Trajectory(np.array([0.0]), np.zeros((2, 3)))
    with pytest.raises(DataError, match="row 2"):
        Trajectory(np.array([0.0, 0.2, 0.1]), np.zeros((3, 3)))
    with pytest.raises(DataError):
        Trajectory(np.array([0.0, float("nan")]), np.zeros((2, 3)))


def test_trajectory_jitter_guard():
    # one interval 2x the median trips the default 1.5x bound
    t = np.array([0.0, 0.1, 0.2, 0.4])
    with pytest.raises(DataError, match="jitter"):
        Trajectory(t, np.zeros((4, 3)))
    Trajectory(t, np.zeros((4, 3)), max_jitter_ratio=2.5)
    # a seam suspends the uniform-spacing requirement
    Trajectory(t, np.zeros((4, 3)), segment_starts=np.array([0, 3]))


def test_dataset_invariants():
    ds = small_dataset()
    with pytest.raises(DataError):
        Dataset(ds.poses, ds.cmd_t[:0], ds.cmd_vals[:0], ds.meta)
    bad_t = ds.cmd_t.copy()
    bad_t[5] = bad_t[4]
    with pytest.raises(DataError, match="command"):
        Dataset(ds.poses, bad_t, ds.cmd_vals, ds.meta)
    # command limits from meta are enforced
    vals = ds.cmd_vals.copy()
    vals[0, 0] = 99.0
    with pytest.raises(DataError, match="s_max"):
        Dataset(ds.poses, ds.cmd_t, vals, {**ds.meta, "s_max": 1.0})


def test_command_and_pose_accessors():
    ds = small_dataset()
    c = ds.command(3)
    assert isinstance(c, Command)
    assert c.t == ds.cmd_t[3]
    p = ds.poses.pose(5)
    assert isinstance(p, Pose)
    assert p.x == ds.poses.xytheta[5, 0]


def test_unwrap_theta():
    th = unwrap_theta(np.array([3.1, -3.1]))
    assert th[0] == pytest.approx(3.1)
    assert th[1] == pytest.approx(2 * math.pi - 3.1, rel=1e-12)
    assert np.all(np.abs(np.diff(th)) < math.pi)


def test_save_load_roundtrip(tmp_path):
    ds = small_dataset(n=1000)
    path = tmp_path / "ds"
    save_dataset(ds, str(path))
    back = load_dataset(str(path))
    assert np.max(np.abs(back.poses.t - ds.poses.t)) < 1e-9
    assert np.max(np.abs(back.poses.xytheta - ds.poses.xytheta)) < 1e-9
    assert np.max(np.abs(back.cmd_t - ds.cmd_t)) < 1e-9
    assert np.max(np.abs(back.cmd_vals - ds.cmd_vals)) < 1e-9
    assert back.meta["pose_rate_hz"] == ds.meta["pose_rate_hz"]


def test_two_row_example(tmp_path):
    path = tmp_path / "ds"
    os.makedirs(path)
    (path / "poses.csv").write_text(
        "t,x,y,theta\n0,0,0,0\n0.0167,0.001,0,0\n")
    (path / "commands.csv").write_text("t,s_c,omega_c\n0,0.5,0\n")
    ds = load_dataset(str(path))
    assert len(ds.poses) == 2
    assert ds.poses.xytheta[1, 0] == pytest.approx(0.001)


def test_load_unwraps_theta(tmp_path):
    path = tmp_path / "ds"
    os.makedirs(path)
    (path / "poses.csv").write_text(
        "t,x,y,theta\n0,0,0,3.1\n0.0167,0,0,-3.1\n")
    (path / "commands.csv").write_text("t,s_c,omega_c\n0,0,0\n")
    ds = load_dataset(str(path))
    assert ds.poses.xytheta[0, 2] == pytest.approx(3.1)
    assert ds.poses.xytheta[1, 2] == pytest.approx(2 * math.pi - 3.1, abs=1e-6)


def test_load_reports_offending_row(tmp_path):
    path = tmp_path / "ds"
    os.makedirs(path)
    (path / "poses.csv").write_text(
        "t,x,y,theta\n0,0,0,0\n0.0167,0,0,0\n")
    (path / "commands.csv").write_text(
        "t,s_c,omega_c\n0.2,0,0\n0.1,0,0\n")
    with pytest.raises(DataError, match="row 1"):
        load_dataset(str(path))
    (path / "commands.csv").write_text("t,s_c,omega_c\n0.1,abc,0\n")
    with pytest.raises(DataError, match="row 1"):
        load_dataset(str(path))
    (path / "commands.csv").write_text("wrong,header\n")
    with pytest.raises(DataError, match="header"):
        load_dataset(str(path))


def test_save_unwritable_path(tmp_path):
    ds = small_dataset()
    target = tmp_path / "blocked"
    target.write_text("i am a file, not a directory")
    with pytest.raises(OSError):
        save_dataset(ds, str(target))


def test_split_is_partition():
    ds = small_dataset(n=1200)
    res = split_dataset(ds, test_fraction=0.3, seed=1, block_s=4.0)
    tr, te = res.train, res.test
    assert len(tr.poses) + len(te.poses) == len(ds.poses)
    assert len(tr.cmd_t) + len(te.cmd_t) == len(ds.cmd_t)
    merged = np.sort(np.concatenate([tr.poses.t, te.poses.t]))
    assert np.array_equal(merged, ds.poses.t)
    assert len(set(tr.poses.t) & set(te.poses.t)) == 0
    # fraction is honored at block granularity
    assert abs(len(te.poses) / len(ds.poses) - 0.3) < 0.15


def test_split_deterministic_and_validated():
    ds = small_dataset(n=600)
    a = split_dataset(ds, test_fraction=0.5, seed=7, block_s=5.0)
    b = split_dataset(ds, test_fraction=0.5, seed=7, block_s=5.0)
    assert np.array_equal(a.test_block_ids, b.test_block_ids)
    assert np.array_equal(a.test.poses.t, b.test.poses.t)
    with pytest.raises(DataError):
        split_dataset(ds, test_fraction=0.0)
    with pytest.raises(DataError):
        split_dataset(ds, test_fraction=1.0)


def test_split_two_blocks_half():
    ds = small_dataset(n=600)  # 10 s at 60 Hz
    res = split_dataset(ds, test_fraction=0.5, seed=0, block_s=5.0)
    assert len(res.test.poses) == 300
    assert len(res.train.poses) == 300


def test_split_blocks_become_segments():
    ds = small_dataset(n=1200)
    res = split_dataset(ds, test_fraction=0.25, seed=3, block_s=4.0)
    # non-adjacent surviving blocks must be separated by seams
    for sub in (res.train, res.test):
        gaps = np.diff(sub.poses.ticks)
        seam_set = set(sub.poses.segment_starts.tolist())
        for i in np.flatnonzero(gaps > 20000):
            assert i + 1 in seam_set


def test_rollout_start_mask_respects_warmup_and_length():
    ds = small_dataset(n=240)
    mask = rollout_start_mask(ds, length=10, window_s=0.2, history=1)
    idx = np.flatnonzero(mask)
    assert len(idx) > 0
    assert ds.poses.t[idx.min()] >= 0.2
    assert idx.max() + 10 < len(ds.poses)
    # anchor needs `history` predecessors for the twist estimate
    mask_h = rollout_start_mask(ds, length=10, window_s=0.0, history=3)
    assert np.flatnonzero(mask_h).min() >= 3


def test_rollout_start_mask_avoids_seams():
    t = np.concatenate([np.arange(100) / 60.0, 10.0 + np.arange(100) / 60.0])
    poses = Trajectory(t, np.zeros((200, 3)), segment_starts=np.array([0, 100]))
    cmd_t = np.arange(0, 12, 0.04)
    ds = Dataset(poses, cmd_t, np.zeros((len(cmd_t), 2)), {})
    mask = rollout_start_mask(ds, length=50, window_s=0.2, history=1)
    idx = np.flatnonzero(mask)
    # no segment may straddle the seam at index 100
    assert np.all((idx + 50 <= 100) | (idx >= 101))


def test_time_shift_helpers():
    ds = small_dataset()
    shifted = ds.shifted(100.0)
    assert shifted.poses.t[0] == pytest.approx(ds.poses.t[0] + 100.0)
    assert shifted.cmd_t[0] == pytest.approx(ds.cmd_t[0] + 100.0)
    assert np.array_equal(shifted.poses.xytheta, ds.poses.xytheta)
