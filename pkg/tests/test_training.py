"""Training paths against the tape reference, optimizer math, search."""

import numpy as np
import pytest

from wheeldyn.analytical import RobotParams
from wheeldyn.core import Dataset, Trajectory, rollout_start_mask
from wheeldyn.datagen import OracleConfig, collect
from wheeldyn.errors import DataError
from wheeldyn.evaluation import extract_segments
from wheeldyn.losses import LossConfig
from wheeldyn.models import compute_norm_stats, make_spec
from wheeldyn.reference import reference_loss_and_grad
from wheeldyn.training import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    AdamState,
    TrainConfig,
    _effective_batch,
    adam_step,
    loss_and_grad,
    param_search,
    progressive_train,
    sample_batch,
    stage_lengths,
    train_stage,
    transform_grad,
    validation_loss,
)


def train_dataset(seed=0, n=900):
    rng = np.random.default_rng(seed)
    rate, cmd_rate = 60.0, 25.0
    t = np.arange(n) / rate
    th = np.cumsum(rng.normal(0, 0.02, n))
    xy = np.cumsum(rng.normal(0, 0.002, (n, 2)), axis=0)
    poses = Trajectory(t, np.column_stack([xy, th]))
    m = int(n / rate * cmd_rate)
    cmd_t = np.arange(m) / cmd_rate
    vals = np.column_stack([rng.uniform(0, 0.8, m), rng.uniform(-1, 1, m)])
    return Dataset(poses, cmd_t, vals,
                   {"pose_rate_hz": rate, "command_rate_hz": cmd_rate})


def seg_for(spec, ds, length=5, starts=(40, 90, 160)):
    return extract_segments(ds, np.array(starts), length, spec)


def random_spec(kind, mode="ego", seed=0, scale=0.05):
    rng = np.random.default_rng(seed)
    robot = RobotParams(tau_s=0.12, tau_w=0.1, slip_gain_s=0.93,
                        slip_gain_w=1.07, cmd_latency=0.05)
    spec = make_spec(kind, mode=mode, robot=robot, seed=seed, hidden=(6, 5, 4))
    if spec.params.size:
        spec.params[:] += rng.normal(0, scale, spec.params.size)
    return spec


def test_train_config_validation():
    with pytest.raises(DataError, match="grad mode"):
        TrainConfig(grad_mode="momentum")
    with pytest.raises(DataError):
        TrainConfig(lr=0.0)
    with pytest.raises(DataError):
        TrainConfig(lr_gamma=1.5)
    with pytest.raises(DataError):
        TrainConfig(batch_size=1)
    with pytest.raises(DataError):
        TrainConfig(bptt_truncate=-1)


# ---------------------------------------------------------------------------
# Fast-path gradients against the tape reference.
# ---------------------------------------------------------------------------

CASES = [
    ("lr", "ego", LossConfig(), 0),
    ("lr", "ego", LossConfig(kind="EgoMSE"), 0),
    ("lr", "ego", LossConfig(), 2),
    ("lr", "translational", LossConfig(), 0),
    ("lr", "translational", LossConfig(), 2),
    ("lr", "none", LossConfig(), 0),
    ("mlp", "ego", LossConfig(), 0),
    ("mlp", "ego", LossConfig(kind="Chamfer", alpha=0.5, theta_weight=0.0), 0),
    ("mlp", "ego", LossConfig(kind="GappedMSE", gap=2), 2),
    ("formulated_plus_mlp", "ego", LossConfig(), 0),
    ("formulated_plus_mlp", "ego", LossConfig(), 2),
    ("mlp_plus_formulated", "ego", LossConfig(), 0),
    ("param_only", "ego", LossConfig(), 0),
]


@pytest.mark.parametrize("kind,mode,cfg,trunc", CASES)
def test_fast_path_matches_tape(kind, mode, cfg, trunc):
    ds = train_dataset()
    spec = random_spec(kind, mode=mode)
    compute_norm_stats(spec, ds)
    seg = seg_for(spec, ds)
    loss, grad, _ = loss_and_grad(spec, seg, cfg=cfg, trunc=trunc)
    want_loss, want_grad = reference_loss_and_grad(spec, seg, spec.params,
                                                   cfg=cfg, trunc=trunc)
    assert abs(loss - want_loss) < 1e-10 * max(1.0, abs(want_loss))
    if spec.params.size:
        scale = max(1.0, float(np.max(np.abs(want_grad))))
        np.testing.assert_allclose(grad, want_grad, atol=1e-8 * scale)


def test_untrainable_configurations_raise():
    ds = train_dataset()
    spec = random_spec("mlp", mode="translational")
    compute_norm_stats(spec, ds)
    seg = seg_for(spec, ds)
    with pytest.raises(DataError, match="no training pass"):
        loss_and_grad(spec, seg)


def test_l2_folds_into_loss_and_grad():
    ds = train_dataset()
    spec = random_spec("lr")
    compute_norm_stats(spec, ds)
    seg = seg_for(spec, ds)
    l0, g0, _ = loss_and_grad(spec, seg, l2=0.0)
    l1, g1, _ = loss_and_grad(spec, seg, l2=0.01)
    p = spec.params
    assert abs((l1 - l0) - 0.01 * float(np.sum(p * p))) < 1e-12
    np.testing.assert_allclose(g1 - g0, 0.02 * p, atol=1e-12)


# ---------------------------------------------------------------------------
# Optimizer.
# ---------------------------------------------------------------------------

def test_adam_matches_manual_recurrence():
    rng = np.random.default_rng(0)
    params = rng.normal(0, 1, 5)
    ref = params.copy()
    st = AdamState.for_params(5)
    m = np.zeros(5)
    v = np.zeros(5)
    for t in range(1, 6):
        g = rng.normal(0, 1, 5)
        adam_step(params, g, st, lr=0.01)
        m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
        ref -= 0.01 * (m / (1 - ADAM_BETA1 ** t)) / (np.sqrt(v / (1 - ADAM_BETA2 ** t)) + ADAM_EPS)
        np.testing.assert_allclose(params, ref, atol=1e-15)
    assert st.t == 5


def test_transform_grad_modes():
    g = np.array([3.0, 4.0])
    assert transform_grad(g, "raw", 1.0) is g
    np.testing.assert_allclose(np.linalg.norm(transform_grad(g, "normalized", 1.0)), 1.0)
    np.testing.assert_allclose(transform_grad(g, "clipped", 10.0), g)
    np.testing.assert_allclose(np.linalg.norm(transform_grad(g, "clipped", 2.0)), 2.0)


# ---------------------------------------------------------------------------
# Batching, validation metric, stages.
# ---------------------------------------------------------------------------

def test_sample_batch_draws_valid_starts_deterministically():
    ds = train_dataset()
    spec = random_spec("lr")
    a = sample_batch(ds, 8, spec, 16, np.random.default_rng(3))
    b = sample_batch(ds, 8, spec, 16, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)
    mask = rollout_start_mask(ds, 8, window_s=spec.T, history=spec.H)
    assert mask[a].all()
    with pytest.raises(DataError, match="no segment"):
        sample_batch(ds, 10_000, spec, 4, np.random.default_rng(0))


def test_validation_loss_is_mean_segment_position_rmse():
    ds = train_dataset()
    spec = random_spec("param_only")
    got = validation_loss(spec, ds, 6, max_segments=8)
    from wheeldyn.evaluation import rollout_batch, stride_starts
    starts = stride_starts(ds, 6, spec, 8)
    seg = extract_segments(ds, starts, 6, spec)
    preds = rollout_batch(spec, ds, starts, 6)
    per_seg = []
    for b in range(len(starts)):
        d = preds[b, :, :2] - seg["targets"][b, :, :2]
        per_seg.append(np.sqrt(np.mean(np.sum(d * d, axis=1))))
    assert abs(got - float(np.mean(per_seg))) < 1e-12


def test_effective_batch_row_cap():
    cfg = TrainConfig(batch_size=200, max_rows=1000)
    assert _effective_batch(cfg, 1) == 200
    assert _effective_batch(cfg, 10) == 100
    assert _effective_batch(cfg, 100_000) == 2


def test_stage_lengths_doubling_schedule():
    assert stage_lengths(1) == [1]
    assert stage_lengths(4) == [1, 2, 4]
    assert stage_lengths(6) == [1, 2, 4, 6]
    assert stage_lengths(4096)[-3:] == [1024, 2048, 4096]
    with pytest.raises(DataError):
        stage_lengths(0)


def test_train_stage_improves_and_restores_best():
    ds = train_dataset()
    val = train_dataset(seed=1)
    spec = random_spec("lr", scale=0.0)
    compute_norm_stats(spec, ds)
    cfg = TrainConfig(max_updates_per_stage=48, updates_per_eval=4,
                      batch_size=32, seed=0)
    before = validation_loss(spec, val, 4, cfg.val_segments)
    rec = train_stage(spec, ds, val, 4, cfg)
    after = validation_loss(spec, val, 4, cfg.val_segments)
    assert rec["length"] == 4
    assert rec["updates"] <= 48
    assert after <= before
    # the returned parameters are the best-by-validation snapshot
    assert abs(after - rec["best_val"]) < 1e-12
    assert rec["trace"][0]["updates"] == 0


def test_train_stage_raises_without_long_segments():
    ds = train_dataset(n=120)
    spec = random_spec("lr")
    compute_norm_stats(spec, ds)
    with pytest.raises(DataError):
        train_stage(spec, ds, ds, 5000, TrainConfig())


def test_progressive_train_runs_schedule_and_lr_carries():
    ds = train_dataset()
    val = train_dataset(seed=1)
    spec = random_spec("lr", scale=0.0)
    compute_norm_stats(spec, ds)
    cfg = TrainConfig(max_updates_per_stage=8, updates_per_eval=4, batch_size=16)
    recs = progressive_train(spec, ds, val, 4, cfg)
    assert [r["length"] for r in recs] == [1, 2, 4]
    # schedule decays monotonically across stage boundaries
    assert recs[0]["lr_final"] > recs[1]["lr_final"] > recs[2]["lr_final"]
    assert abs(recs[0]["lr_final"] - cfg.lr * cfg.lr_gamma ** 8) < 1e-15


# ---------------------------------------------------------------------------
# Physical-parameter search.
# ---------------------------------------------------------------------------

def clean_oracle_dataset(robot, seconds=30.0, seed=7):
    return collect(OracleConfig(true_params=robot, seed=seed), seconds)


def test_param_search_validates_inputs():
    ds = train_dataset()
    with pytest.raises(DataError, match="unknown robot parameter"):
        param_search(ds, names=("mass",), budget=4)
    with pytest.raises(DataError, match="unknown search strategy"):
        param_search(ds, strategy="anneal", budget=4)


def test_param_search_random_improves_over_base():
    truth = RobotParams(slip_gain_s=0.8)
    ds = clean_oracle_dataset(truth)
    res = param_search(ds, names=("slip_gain_s",), strategy="random",
                       budget=24, seed=0, length=16, max_segments=16)
    base_obj = param_search(ds, names=("slip_gain_s",), strategy="random",
                            budget=1, seed=0, length=16, max_segments=16).value
    assert res.evals <= 24
    assert res.value <= base_obj
    assert len(res.history) == res.evals


def test_param_search_coordinate_recovers_slip_gain():
    truth = RobotParams(slip_gain_s=0.8)
    ds = clean_oracle_dataset(truth)
    res = param_search(ds, names=("slip_gain_s",), budget=60, length=16,
                       max_segments=16)
    assert abs(res.robot.slip_gain_s - 0.8) < 0.02
    assert res.robot.slip_gain_w == 1.0  # untouched parameters keep defaults


def test_param_search_latency_snaps_to_bin_grid():
    truth = RobotParams(cmd_latency=0.08)
    ds = clean_oracle_dataset(truth, seed=9)
    res = param_search(ds, names=("cmd_latency",), budget=30, length=16,
                       max_segments=16)
    from wheeldyn.analytical import latency_bin
    assert latency_bin(5, 0.2, res.robot.cmd_latency) == latency_bin(5, 0.2, 0.08)
