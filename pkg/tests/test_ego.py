"""Frame-handling tests: offsets, rebasing, and rigid invariance."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wheeldyn import autodiff as ad
from wheeldyn.core import Command, Pose
from wheeldyn.ego import (
    EgoOffset,
    EgoState,
    advance_offset,
    check_mode,
    frame_to_global,
    from_ego,
    global_to_frame,
    initial_state,
    reorigin_timestamps,
    rotation_matrix,
    to_ego,
)
from wheeldyn.errors import DataError
from wheeldyn.losses import LossConfig, ego_mse_loss, mse_loss

ANGLES = st.floats(-8.0, 8.0, allow_nan=False)
COORDS = st.floats(-50.0, 50.0, allow_nan=False)


def se2_matrix(p):
    """Homogeneous 3x3 oracle, deliberately independent of the package math."""
    c, s = math.cos(p.theta), math.sin(p.theta)
    return np.array([[c, -s, p.x], [s, c, p.y], [0.0, 0.0, 1.0]])


def se2_compose(g, r):
    m = se2_matrix(g) @ se2_matrix(r)
    return Pose(m[0, 2], m[1, 2], g.theta + r.theta)


def test_rotation_matrix_group_properties():
    a, b = 0.7, -1.9
    np.testing.assert_allclose(rotation_matrix(a) @ rotation_matrix(b),
                               rotation_matrix(a + b), atol=1e-12)
    np.testing.assert_allclose(rotation_matrix(0.0), np.eye(3), atol=0)
    assert abs(np.linalg.det(rotation_matrix(a)) - 1.0) < 1e-12


@given(x=COORDS, y=COORDS, th=ANGLES, dx=COORDS, dy=COORDS, dth=ANGLES)
@settings(max_examples=200, deadline=None)
def test_from_ego_to_ego_are_inverse(x, y, th, dx, dy, dth):
    off = EgoOffset(dx, dy, dth)
    p = Pose(x, y, th)
    back = to_ego(from_ego(p, off), off)
    assert abs(back.x - p.x) < 1e-9
    assert abs(back.y - p.y) < 1e-9
    assert abs(back.theta - p.theta) < 1e-12
    fwd = from_ego(to_ego(p, off), off)
    assert abs(fwd.x - p.x) < 1e-9
    assert abs(fwd.y - p.y) < 1e-9


def test_frame_helpers_match_modes():
    off = EgoOffset(1.0, -2.0, 0.5)
    p = Pose(0.3, 0.4, 0.1)
    g_ego = frame_to_global(p, off, "ego")
    assert g_ego == from_ego(p, off)
    g_tr = frame_to_global(p, off, "translational")
    assert (g_tr.x, g_tr.y, g_tr.theta) == (1.3, -1.6, 0.1)
    assert frame_to_global(p, off, "none") is p
    for mode in ("ego", "translational", "none"):
        q = frame_to_global(p, off, mode)
        r = global_to_frame(q, off, mode)
        assert abs(r.x - p.x) < 1e-12 and abs(r.theta - p.theta) < 1e-12


def test_check_mode_rejects_unknown():
    with pytest.raises(DataError, match="frame mode"):
        check_mode("polar")


def test_initial_state_anchors_newest_pose():
    poses = [Pose(1.0, 2.0, 0.3), Pose(1.5, 2.5, 0.9)]
    st_ego = initial_state(poses, "ego")
    newest = st_ego.history[-1]
    assert abs(newest.x) < 1e-12 and abs(newest.y) < 1e-12 and abs(newest.theta) < 1e-12
    assert st_ego.offset == EgoOffset(1.5, 2.5, 0.9)
    # older history entries keep their relative placement
    g = from_ego(st_ego.history[0], st_ego.offset)
    assert abs(g.x - 1.0) < 1e-12 and abs(g.theta - 0.3) < 1e-12

    st_tr = initial_state(poses, "translational")
    assert st_tr.offset.dtheta == 0.0
    assert st_tr.history[-1].theta == 0.9

    st_none = initial_state(poses, "none")
    assert st_none.offset == EgoOffset.identity()
    assert st_none.history[-1] == poses[-1]

    with pytest.raises(DataError, match="at least one pose"):
        initial_state([], "ego")


def test_advance_offset_quarter_turn_example():
    # Anchor facing +y; a forward step in the local frame must move the
    # global pose along +y.
    st0 = initial_state([Pose(0.0, 0.0, math.pi / 2)], "ego")
    st1 = advance_offset(st0, Pose(0.1, 0.0, 0.0))
    assert abs(st1.offset.dx - 0.0) < 1e-12
    assert abs(st1.offset.dy - 0.1) < 1e-12
    assert abs(st1.offset.dtheta - math.pi / 2) < 1e-12
    assert st1.history == (Pose(0.0, 0.0, 0.0),)


def test_advance_offset_accumulates_like_global_composition():
    rng = np.random.default_rng(7)
    g = Pose(0.4, -0.2, 0.9)
    state = initial_state([g], "ego")
    for _ in range(100):
        r = Pose(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                 rng.uniform(-0.3, 0.3))
        g = se2_compose(g, r)
        state = advance_offset(state, r)
        assert abs(state.offset.dx - g.x) < 1e-9
        assert abs(state.offset.dy - g.y) < 1e-9
        assert abs(state.offset.dtheta - g.theta) < 1e-9


@given(mode=st.sampled_from(("ego", "translational", "none")),
       H=st.integers(1, 3), seed=st.integers(0, 200))
@settings(max_examples=60, deadline=None)
def test_rebase_never_moves_poses_globally(mode, H, seed):
    rng = np.random.default_rng(seed)
    poses = [Pose(*rng.uniform(-2, 2, size=3)) for _ in range(H)]
    state = initial_state(poses, mode)
    for _ in range(5):
        r = Pose(*rng.uniform(-0.5, 0.5, size=3))
        before = [frame_to_global(p, state.offset, mode)
                  for p in state.history[1:] + (r,)]
        state = advance_offset(state, r)
        after = [frame_to_global(p, state.offset, mode) for p in state.history]
        for b, a in zip(before, after):
            assert abs(a.x - b.x) < 1e-9
            assert abs(a.y - b.y) < 1e-9
            assert abs(a.theta - b.theta) < 1e-9


@given(alpha=ANGLES, tx=COORDS, ty=COORDS, seed=st.integers(0, 100))
@settings(max_examples=60, deadline=None)
def test_ego_history_is_rigid_invariant(alpha, tx, ty, seed):
    """Moving the whole scene by one rigid transform leaves local views alone."""
    rng = np.random.default_rng(seed)
    poses = [Pose(*rng.uniform(-3, 3, size=3)) for _ in range(3)]
    base = Pose(tx, ty, alpha)
    moved = [se2_compose(base, p) for p in poses]
    h0 = initial_state(poses, "ego").history
    h1 = initial_state(moved, "ego").history
    for a, b in zip(h0, h1):
        assert abs(a.x - b.x) < 1e-8
        assert abs(a.y - b.y) < 1e-8
        assert abs(a.theta - b.theta) < 1e-8


def test_translational_history_invariant_to_translation_only():
    poses = [Pose(0.0, 0.0, 0.4), Pose(0.5, 0.1, 0.6)]
    moved = [Pose(p.x + 3.0, p.y - 2.0, p.theta) for p in poses]
    h0 = initial_state(poses, "translational").history
    h1 = initial_state(moved, "translational").history
    for a, b in zip(h0, h1):
        assert abs(a.x - b.x) < 1e-12
        assert abs(a.theta - b.theta) < 1e-12
    # a rotation must leak through in this mode
    rot = [se2_compose(Pose(0, 0, 1.0), p) for p in poses]
    h2 = initial_state(rot, "translational").history
    assert abs(h2[0].theta - h0[0].theta) > 0.5


def test_ego_mse_equals_global_mse():
    rng = np.random.default_rng(3)
    off = EgoOffset(1.7, -0.4, 2.1)
    cfg = LossConfig(theta_weight=0.25)
    vals_local, vals_global = [], []
    preds_g, truths_g = [], []
    for _ in range(32):
        pred_local = Pose(*rng.uniform(-1, 1, size=3))
        truth_global = Pose(*rng.uniform(-1, 1, size=3))
        vals_local.append(ego_mse_loss(pred_local, truth_global, off, cfg))
        preds_g.append(from_ego(pred_local, off).as_array())
        truths_g.append(truth_global.as_array())
    local = float(np.mean(vals_local))
    glob = mse_loss(np.array(preds_g), np.array(truths_g), cfg)
    assert abs(local - glob) < 1e-10


def test_ego_mse_runs_on_tape():
    off = EgoOffset(0.2, 0.1, 0.3)
    x = ad.Value(0.5)
    pred = Pose(x, 0.0, 0.0)
    loss = ego_mse_loss(pred, Pose(0.4, 0.2, 0.1), off)
    loss.backward()
    r = to_ego(Pose(0.4, 0.2, 0.1), off)
    assert abs(x.grad - 2.0 * (0.5 - r.x)) < 1e-12


def test_reorigin_timestamps_shifts_and_guards():
    cmds = [Command(0.0, 1.0, 0.0), Command(2.0, 0.5, 0.2), Command(5.0, 0.0, 0.0)]
    out = reorigin_timestamps(cmds, 5.0)
    assert [c.t for c in out] == [-5.0, -3.0, 0.0]
    assert out[1].s_c == 0.5 and out[1].omega_c == 0.2
    with pytest.raises(DataError, match="future"):
        reorigin_timestamps(cmds, 4.0)
    # integer stamps shift exactly: relative times are bitwise stable
    shifted = [Command(c.t + 100.0, c.s_c, c.omega_c) for c in cmds]
    again = reorigin_timestamps(shifted, 105.0)
    assert [c.t for c in again] == [c.t for c in out]


def test_ego_state_reports_history_depth():
    s = EgoState(EgoOffset.identity(), (Pose(0, 0, 0), Pose(1, 0, 0)), "none")
    assert s.H == 2
