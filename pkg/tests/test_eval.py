"""Tests for rollout evaluation, RMSE reports and report file round-trips."""

import math

import numpy as np
import pytest

from wheeldyn.analytical import RobotParams
from wheeldyn.core import Dataset, Trajectory
from wheeldyn.datagen import OracleConfig, collect
from wheeldyn.errors import DataError
from wheeldyn.evaluation import (EvalReport, compare_reports, extract_segments,
                                 load_report, rmse_by_length, rollout,
                                 rollout_batch, save_comparison, save_report,
                                 stride_starts)
from wheeldyn.models import make_spec
from wheeldyn.reference import reference_rollout


def straight_dataset(n=200, s=0.5, dt=0.02):
    """Constant-speed drive along +x on the exact microsecond grid."""
    t = np.arange(n) * dt
    xyth = np.column_stack([s * dt * np.arange(n), np.zeros(n), np.zeros(n)])
    poses = Trajectory(t, xyth, np.array([0], dtype=np.int64))
    n_cmd = int(math.ceil(n * dt / 0.04)) + 1
    cmd_t = np.arange(n_cmd) * 0.04
    cmd_vals = np.column_stack([np.full(n_cmd, s), np.zeros(n_cmd)])
    return Dataset(poses, cmd_t, cmd_vals, {})


def oracle_spec(gain=1.0, latency=0.0):
    robot = RobotParams(slip_gain_s=gain, cmd_latency=latency)
    return make_spec("param_only", robot=robot)


def test_matched_params_reproduce_straight_line():
    ds = straight_dataset()
    rep = rmse_by_length(oracle_spec(), ds, lengths=(1, 4, 16))
    assert rep.lengths == [1, 4, 16]
    assert all(r < 1e-9 for r in rep.rmse_mm)
    assert rep.notes == []


def test_speed_bias_rmse_closed_form():
    """A gain error on straight-line motion has an exact per-length RMSE."""
    s, dt, gain = 0.5, 0.02, 1.1
    ds = straight_dataset(s=s, dt=dt)
    rep = rmse_by_length(oracle_spec(gain=gain), ds, lengths=(1, 4, 16))
    delta = (gain - 1.0) * s * dt
    for L, got in zip(rep.lengths, rep.rmse_mm):
        i = np.arange(1, L + 1)
        want = delta * math.sqrt(np.mean(i * i)) * 1000.0
        assert got == pytest.approx(want, rel=1e-6)
    # at one step the 10% bias on 10 mm of travel reads exactly 1 mm
    assert rep.rmse_mm[0] == pytest.approx(1.0, rel=1e-6)


def test_perfect_predictor_on_collected_data():
    true = RobotParams(slip_gain_s=0.9, slip_gain_w=1.1, cmd_latency=0.04)
    ds = collect(OracleConfig(true_params=true, seed=6), 20.0)
    rep = rmse_by_length(make_spec("param_only", robot=true), ds,
                         lengths=(1, 8, 64), max_segments=40)
    assert rep.lengths == [1, 8, 64]
    assert all(r < 1e-9 for r in rep.rmse_mm)
    # and a wrong latency ruins it
    off = RobotParams(slip_gain_s=0.9, slip_gain_w=1.1, cmd_latency=0.16)
    rep2 = rmse_by_length(make_spec("param_only", robot=off), ds,
                          lengths=(64,), max_segments=40)
    assert rep2.rmse_mm[0] > 1.0


def test_rollout_reads_no_future_commands():
    ds = straight_dataset()
    spec = oracle_spec()
    k, L = 20, 6
    base = rollout_batch(spec, ds, np.array([k]), L)
    horizon_tick = ds.poses.ticks[k + L - 1]
    vals = ds.cmd_vals.copy()
    vals[ds.cmd_ticks > horizon_tick] = 123.0
    future = Dataset(ds.poses, ds.cmd_t, vals, validate=False)
    assert np.array_equal(rollout_batch(spec, future, np.array([k]), L), base)
    # flipping the newest command at or before the anchor does change it
    vals2 = ds.cmd_vals.copy()
    j = np.searchsorted(ds.cmd_ticks, ds.poses.ticks[k], side="right") - 1
    vals2[j] = (0.1, 0.4)
    past = Dataset(ds.poses, ds.cmd_t, vals2, validate=False)
    assert not np.array_equal(rollout_batch(spec, past, np.array([k]), L), base)


def test_rollout_returns_dataset_timestamps():
    ds = straight_dataset()
    traj = rollout(oracle_spec(), ds, 18, 5)
    assert np.array_equal(traj.ticks, ds.poses.ticks[19:24])
    assert np.array_equal(traj.t, ds.poses.t[19:24])
    assert traj.xytheta.shape == (5, 3)


def test_rollout_error_cases():
    ds = straight_dataset(n=60)
    spec = oracle_spec()
    with pytest.raises(DataError, match="at least 1"):
        rollout(spec, ds, 20, 0)
    with pytest.raises(DataError, match="out of range"):
        rollout(spec, ds, -1, 4)
    with pytest.raises(DataError, match="out of range"):
        rollout(spec, ds, 60, 4)
    # inside the warmup window there is no command history yet
    with pytest.raises(DataError, match="lacks command history"):
        rollout(spec, ds, 5, 4)
    # horizon runs off the end of the segment
    with pytest.raises(DataError, match="lacks command history"):
        rollout(spec, ds, 58, 4)


def test_extract_segments_contents():
    ds = straight_dataset()
    spec = oracle_spec()
    starts = np.array([15, 30])
    seg = extract_segments(ds, starts, 4, spec)
    assert seg["bins"].shape == (2, 4, 2 * spec.K)
    assert np.allclose(seg["bins"][:, :, 0::2], 0.5)
    assert np.allclose(seg["dt"], 0.02)
    assert np.array_equal(seg["start_pose"], ds.poses.xytheta[starts])
    assert np.array_equal(seg["targets"][0], ds.poses.xytheta[16:20])
    assert seg["twist0"][0, 0] == pytest.approx(0.5, rel=1e-9)
    assert seg["twist0"][0, 1] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DataError, match="no rollout starts"):
        extract_segments(ds, np.array([], dtype=np.int64), 4, spec)


def test_history_fallback_matches_reference():
    ds = straight_dataset()
    spec = make_spec("lr", H=2, robot=RobotParams(), seed=3)
    starts = np.array([20, 40])
    got = rollout_batch(spec, ds, starts, 5)
    want = np.stack([reference_rollout(spec, ds, int(k), 5).xytheta
                     for k in starts])
    assert np.array_equal(got, want)


def test_stride_starts_deterministic_and_even():
    ds = straight_dataset(n=200)
    spec = oracle_spec()
    idx_all = stride_starts(ds, 4, spec, max_segments=10**9)
    assert idx_all[0] == 15 and idx_all[-1] == 195
    sub = stride_starts(ds, 4, spec, max_segments=10)
    assert len(sub) == 10
    assert np.array_equal(sub, stride_starts(ds, 4, spec, max_segments=10))
    assert np.all(np.isin(sub, idx_all))
    assert sub[0] == idx_all[0]
    assert np.all(np.diff(sub) > 0)
    # fewer candidates than the cap: return all of them
    assert np.array_equal(stride_starts(ds, 4, spec, max_segments=10**9),
                          stride_starts(ds, 4, spec, max_segments=len(idx_all)))


def test_rmse_skips_impossible_lengths():
    ds = straight_dataset(n=100)
    rep = rmse_by_length(oracle_spec(), ds, lengths=(4, 1_000_000))
    assert rep.lengths == [4]
    assert len(rep.notes) == 1 and "1000000" in rep.notes[0]


def test_report_file_roundtrip(tmp_path):
    rep = EvalReport(lengths=[1, 8, 64], rmse_mm=[0.5, 2.25, 100.0 / 3.0],
                     n_segments=[256, 256, 31],
                     notes=["length 512: skipped, no segment long enough"])
    path = str(tmp_path / "report.csv")
    save_report(rep, path)
    back = load_report(path)
    assert back.lengths == rep.lengths
    assert back.n_segments == rep.n_segments
    assert back.notes == rep.notes
    # values survive the fixed-point format to nine decimals
    assert back.rmse_mm == pytest.approx(rep.rmse_mm, abs=1e-9)
    bad = tmp_path / "bad.csv"
    bad.write_text("rmse,length\n1,2\n")
    with pytest.raises(DataError, match="unrecognized report header"):
        load_report(str(bad))


def test_compare_reports_rows_and_file(tmp_path):
    a = EvalReport(lengths=[1, 8], rmse_mm=[2.0, 9.0], n_segments=[4, 4])
    b = EvalReport(lengths=[1, 8], rmse_mm=[4.0, 3.0], n_segments=[4, 4])
    rows = compare_reports(a, b, "hybrid", "baseline")
    assert rows[0]["winner"] == "hybrid" and rows[0]["ratio"] == 0.5
    assert rows[1]["winner"] == "baseline" and rows[1]["ratio"] == 3.0
    path = str(tmp_path / "cmp.csv")
    save_comparison(rows, path, "hybrid", "baseline")
    lines = open(path).read().splitlines()
    assert lines[0] == "length,rmse_hybrid,rmse_baseline,ratio,winner"
    assert lines[1].startswith("1,2.000000000,4.000000000,0.500000000,hybrid")
    mismatched = EvalReport(lengths=[1], rmse_mm=[1.0], n_segments=[4])
    with pytest.raises(DataError, match="different lengths"):
        compare_reports(a, mismatched)


def test_compare_reports_zero_edge_cases():
    z = EvalReport(lengths=[1], rmse_mm=[0.0], n_segments=[1])
    p = EvalReport(lengths=[1], rmse_mm=[5.0], n_segments=[1])
    assert compare_reports(p, z)[0]["ratio"] == math.inf
    assert compare_reports(z, z)[0]["ratio"] == 1.0
    assert compare_reports(z, p)[0]["ratio"] == 0.0
