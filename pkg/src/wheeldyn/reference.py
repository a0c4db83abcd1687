"""Scalar reference implementations of the rollout and training passes.

Everything here walks one step at a time through :func:`models.predict_step`
and the egocentric bookkeeping, either on plain floats (evaluation) or on
autodiff tape nodes (gradient cross-checks). The batched kernels must agree
with these functions to float precision; the tests enforce that. This module
is also the execution path for configurations the kernels do not cover, such
as histories longer than one pose.
"""

from __future__ import annotations

import numpy as np

from . import analytical, autodiff as ad
from .core import ChassisTwist, Pose, TICKS_PER_SECOND, Trajectory, rollout_start_mask
from .ego import EgoState, advance_offset, frame_to_global, global_to_frame, initial_state
from .errors import DataError
from .losses import CHAMFER_BAND, LossConfig, _nn_indices, _sq_dists
from .models import (CommandWindow, ModelSpec, estimate_twist, featurize,
                     lr_forward, mlp_forward_batch, predict_step)


def _detach_pose(p):
    return Pose(ad.truncate_gradient(p.x), ad.truncate_gradient(p.y),
                ad.truncate_gradient(p.theta))


def _detach_state(st):
    off = st.offset
    return EgoState(offset=type(off)(ad.truncate_gradient(off.dx),
                                     ad.truncate_gradient(off.dy),
                                     ad.truncate_gradient(off.dtheta)),
                    history=tuple(_detach_pose(p) for p in st.history),
                    mode=st.mode)


def _window_at(ds, tick, T, K):
    from .models import build_window
    return build_window(ds.cmd_ticks, ds.cmd_vals, tick, T, K)


def reference_rollout(spec, ds, k, n):
    """Plain-float sequential rollout from pose index ``k`` for ``n`` steps.

    Handles every model kind, frame mode and history length. Returns the
    predicted trajectory on the dataset's pose timestamps k+1 .. k+n.
    """
    mask = rollout_start_mask(ds, n, window_s=spec.T, history=spec.H)
    if k < 0 or k >= len(mask) or not mask[k]:
        raise DataError(f"index {k} is not a valid start for a {n}-step rollout")
    hist = [Pose(*ds.poses.xytheta[j]) for j in range(k - spec.H + 1, k + 1)]
    st = initial_state(hist, spec.mode)
    tw = ChassisTwist(*estimate_twist(ds.poses, [k])[0])
    ticks = ds.poses.ticks
    out = np.empty((n, 3))
    for i in range(n):
        window = _window_at(ds, ticks[k + i], spec.T, spec.K)
        dt = (ticks[k + i + 1] - ticks[k + i]) / TICKS_PER_SECOND
        r_hat, tw = predict_step(spec, st, window, tw, dt)
        g = frame_to_global(r_hat, st.offset, spec.mode)
        out[i] = (g.x, g.y, g.theta)
        st = advance_offset(st, r_hat)
    return Trajectory(ds.poses.t[k + 1:k + 1 + n], out,
                      np.array([0], dtype=np.int64),
                      ticks=ticks[k + 1:k + 1 + n], validate=False)


# ---------------------------------------------------------------------------
# Tape training pass.
# ---------------------------------------------------------------------------

def _cut(i, trunc):
    return trunc > 0 and i > 0 and i % trunc == 0


def _float(v):
    return v.data if isinstance(v, ad.Value) else float(v)


def _uncorrected_twist_rows(spec, bins, dt, twist0):
    """Float lag-chain states used by the residual family's feature block."""
    B, L, _ = bins.shape
    K = spec.K
    r = spec.robot
    j = analytical.latency_bin(K, spec.T, r.cmd_latency)
    rows = np.empty((B, L, 2))
    s = twist0[:, 0].copy()
    w = twist0[:, 1].copy()
    for i in range(L):
        a_s = 1.0 if r.tau_s < 1e-6 else 1.0 - np.exp(-dt[:, i] / r.tau_s)
        a_w = 1.0 if r.tau_w < 1e-6 else 1.0 - np.exp(-dt[:, i] / r.tau_w)
        s = s + (r.slip_gain_s * bins[:, i, 2 * j] - s) * a_s
        w = w + (r.slip_gain_w * bins[:, i, 2 * j + 1] - w) * a_w
        rows[:, i, 0] = s
        rows[:, i, 1] = w
    return rows


def _batched_net_rows(spec, seg, pv, bn_stats):
    """Net outputs for every (segment, step) row with train-mode batchnorm.

    Only valid when the features carry no feedback from earlier predictions,
    which is exactly the egocentric single-pose-history configuration.
    """
    bins = seg["bins"]
    B, L, _ = bins.shape
    zeros = [0.0, 0.0, 0.0]
    batch = []
    if spec.kind == "mlp_plus_formulated":
        tw_rows = _uncorrected_twist_rows(spec, bins, seg["dt"], seg["twist0"])
    for b in range(B):
        for i in range(L):
            row = zeros + [float(v) for v in bins[b, i]]
            if spec.kind == "mlp_plus_formulated":
                dt = seg["dt"][b, i]
                row = row + [tw_rows[b, i, 0] * dt, 0.0, tw_rows[b, i, 1] * dt]
            batch.append(row)
    outs = mlp_forward_batch(batch, pv, spec, train=True, bn_stats=bn_stats,
                             update_running=False)
    return outs, (tw_rows if spec.kind == "mlp_plus_formulated" else None)


def _local_prediction(spec, st, window, tw, dt, pv, net_out):
    """One local-frame prediction given precomputed net output (or None)."""
    r = spec.robot
    if spec.kind == "param_only":
        return analytical.formulated_step(st.history[-1], tw, window, r, dt)
    if spec.kind in ("lr", "mlp"):
        if net_out is None:
            net_out = lr_forward(featurize(st, window), pv, spec)
        return Pose(net_out[0], net_out[1], net_out[2]), tw
    if spec.kind == "formulated_plus_mlp":
        j = analytical.latency_bin(window.K, window.T, r.cmd_latency)
        s_c, w_c = float(window.bins[j][0]), float(window.bins[j][1])
        s1 = analytical.lag_update(tw.s, r.slip_gain_s * s_c, dt, r.tau_s)
        w1 = analytical.lag_update(tw.omega, r.slip_gain_w * w_c, dt, r.tau_w)
        tw_new = ChassisTwist(s1 + net_out[0], w1 + net_out[1])
        return analytical.kinematics_step(st.history[-1], tw_new, dt), tw_new
    # mlp_plus_formulated
    r_form, tw_new = analytical.formulated_step(st.history[-1], tw, window, r, dt)
    return Pose(r_form.x + net_out[0], r_form.y + net_out[1],
                r_form.theta + net_out[2]), tw_new


def tape_train_predictions(spec, seg, pv, trunc, bn_stats=None):
    """Global-frame predictions for a training batch, built on the tape.

    Matches the kernel training passes step for step, including the
    truncation rule: at every step index divisible by ``trunc`` the carried
    offset, pose history and twist state are detached before use. Returns a
    (B, L) nested list of global poses whose entries are tape nodes wherever
    they depend on ``pv``.
    """
    B, L, _ = seg["bins"].shape
    K = spec.K
    if spec.uses_mlp():
        if spec.mode != "ego" or spec.H != 1:
            raise DataError("train-mode batchnorm requires the egocentric "
                            "single-pose-history configuration")
        net_rows, _ = _batched_net_rows(spec, seg, pv, bn_stats)
    preds = []
    for b in range(B):
        st = initial_state([Pose(*seg["start_pose"][b])], spec.mode)
        tw = ChassisTwist(*seg["twist0"][b])
        row = []
        for i in range(L):
            if _cut(i, trunc):
                st = _detach_state(st)
                tw = ChassisTwist(ad.truncate_gradient(tw.s),
                                  ad.truncate_gradient(tw.omega))
            window = CommandWindow(bins=seg["bins"][b, i].reshape(K, 2),
                                   T=spec.T, K=K)
            net_out = net_rows[b * L + i] if spec.uses_mlp() else None
            dt = float(seg["dt"][b, i])
            r_hat, tw = _local_prediction(spec, st, window, tw, dt,
                                          spec.params if pv is None else pv, net_out)
            row.append(frame_to_global(r_hat, st.offset, spec.mode))
            st = advance_offset(st, r_hat)
        preds.append(row)
    return preds


def _pred_array(preds):
    return np.array([[(_float(p.x), _float(p.y), _float(p.theta)) for p in row]
                     for row in preds])


def tape_train_loss(spec, seg, pv, cfg=LossConfig(), trunc=0, bn_stats=None,
                    band=CHAMFER_BAND):
    """Training loss as a single tape node (or float when ``pv`` is floats).

    Mirrors :func:`losses.batch_loss_grad` term for term so kernel gradients
    can be checked against tape backprop and finite differences. EgoMSE
    measures each step in the frame the prediction was made in; because that
    frame change is rigid, the value matches the global MSE exactly.
    """
    B, L, _ = seg["bins"].shape
    targets = seg["targets"]
    if cfg.kind == "EgoMSE":
        # Needs the pre-step offsets, so recompute terms during composition.
        return _tape_ego_mse(spec, seg, pv, cfg, trunc, bn_stats)
    preds = tape_train_predictions(spec, seg, pv, trunc, bn_stats=bn_stats)
    tw_w = cfg.theta_weight
    terms = []
    if cfg.kind in ("MSE", "GappedMSE"):
        gap = cfg.gap if cfg.kind == "GappedMSE" else 1
        sel = range(0, L, gap)
        for b in range(B):
            for i in sel:
                p, t = preds[b][i], targets[b, i]
                d = ad.square(p.x - t[0]) + ad.square(p.y - t[1])
                if tw_w != 0.0:
                    d = d + tw_w * ad.square(p.theta - t[2])
                terms.append(d)
        return ad.mean(terms)
    if cfg.kind == "Chamfer":
        flat = _pred_array(preds)
        total = 0.0
        for b in range(B):
            d_tp = _sq_dists(targets[b], flat[b], tw_w)
            nn_t = _nn_indices(d_tp, band)
            nn_p = _nn_indices(d_tp.T, band)
            fwd = []
            for j in range(L):
                p, t = preds[b][nn_t[j]], targets[b, j]
                d = ad.square(p.x - t[0]) + ad.square(p.y - t[1])
                if tw_w != 0.0:
                    d = d + tw_w * ad.square(p.theta - t[2])
                fwd.append(d)
            bwd = []
            for j in range(L):
                p, t = preds[b][j], targets[b, nn_p[j]]
                d = ad.square(p.x - t[0]) + ad.square(p.y - t[1])
                if tw_w != 0.0:
                    d = d + tw_w * ad.square(p.theta - t[2])
                bwd.append(d)
            total = total + ((1.0 - cfg.alpha) * ad.mean(fwd)
                             + cfg.alpha * ad.mean(bwd)) / B
        return total
    raise DataError(f"unknown loss kind {cfg.kind!r}")


def _tape_ego_mse(spec, seg, pv, cfg, trunc, bn_stats):
    B, L, _ = seg["bins"].shape
    K = spec.K
    if spec.uses_mlp():
        if spec.mode != "ego" or spec.H != 1:
            raise DataError("train-mode batchnorm requires the egocentric "
                            "single-pose-history configuration")
        net_rows, _ = _batched_net_rows(spec, seg, pv, bn_stats)
    terms = []
    for b in range(B):
        st = initial_state([Pose(*seg["start_pose"][b])], spec.mode)
        tw = ChassisTwist(*seg["twist0"][b])
        for i in range(L):
            if _cut(i, trunc):
                st = _detach_state(st)
                tw = ChassisTwist(ad.truncate_gradient(tw.s),
                                  ad.truncate_gradient(tw.omega))
            window = CommandWindow(bins=seg["bins"][b, i].reshape(K, 2),
                                   T=spec.T, K=K)
            net_out = net_rows[b * L + i] if spec.uses_mlp() else None
            dt = float(seg["dt"][b, i])
            r_hat, tw = _local_prediction(spec, st, window, tw, dt,
                                          spec.params if pv is None else pv, net_out)
            t_loc = global_to_frame(Pose(*seg["targets"][b, i]), st.offset, spec.mode)
            d = ad.square(r_hat.x - t_loc.x) + ad.square(r_hat.y - t_loc.y)
            if cfg.theta_weight != 0.0:
                d = d + cfg.theta_weight * ad.square(r_hat.theta - t_loc.theta)
            terms.append(d)
            st = advance_offset(st, r_hat)
    return ad.mean(terms)


def reference_loss_and_grad(spec, seg, pv_np, cfg=LossConfig(), trunc=0,
                            bn_stats=None, band=CHAMFER_BAND):
    """Loss and d(loss)/d(params) from the tape, as plain numpy values."""
    pv = [ad.Value(float(v)) for v in pv_np]
    out = tape_train_loss(spec, seg, pv, cfg=cfg, trunc=trunc,
                          bn_stats=bn_stats, band=band)
    if not isinstance(out, ad.Value):
        return float(out), np.zeros(len(pv_np))
    out.backward()
    return out.data, np.array([v.grad for v in pv])
