"""Training and evaluation objectives.

All losses compare a predicted trajectory against a reference one. Distances
are squared; heading participates with a configurable weight. Index-aligned
kinds default to weight 1 so training supervises heading; Chamfer defaults
to weight 0 and matches positions only, since nearest-neighbor pairing in a
mixed meter/radian metric is not meaningful. The Chamfer variant relaxes
index alignment to nearest neighbors, weighted by ``alpha`` between the two
matching directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ego import to_ego
from .errors import DataError

CHAMFER_BAND = 16


@dataclass(frozen=True)
class LossConfig:
    kind: str = "MSE"
    alpha: float = 0.5
    gap: int = 1
    l2: float = 0.0
    theta_weight: float = None

    def __post_init__(self):
        if self.kind not in ("MSE", "EgoMSE", "Chamfer", "GappedMSE"):
            raise DataError(f"unknown loss kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise DataError("alpha must lie in [0, 1]")
        if self.gap < 1:
            raise DataError("gap must be a positive integer")
        if self.theta_weight is None:
            object.__setattr__(self, "theta_weight",
                               0.0 if self.kind == "Chamfer" else 1.0)
        if self.l2 < 0.0 or self.theta_weight < 0.0:
            raise DataError("l2 and theta_weight must be non-negative")


def _points(traj):
    if hasattr(traj, "xytheta"):
        return np.asarray(traj.xytheta, dtype=np.float64)
    return np.asarray(traj, dtype=np.float64).reshape(-1, 3)


def _sq_dists(a, b, theta_weight):
    d = a[:, None, :] - b[None, :, :]
    w = np.array([1.0, 1.0, theta_weight])
    return np.einsum("ijk,k->ij", d * d, w)


def mse_loss(pred, truth, cfg=LossConfig()):
    """Mean over steps of the weighted squared pose error."""
    p, t = _points(pred), _points(truth)
    if p.shape != t.shape:
        raise DataError(f"trajectory length mismatch: {p.shape[0]} vs {t.shape[0]}")
    if p.shape[0] == 0:
        raise DataError("cannot score empty trajectories")
    d = p - t
    return float(np.mean(d[:, 0] ** 2 + d[:, 1] ** 2 + cfg.theta_weight * d[:, 2] ** 2))


def gapped_mse_loss(pred, truth, cfg=LossConfig(kind="GappedMSE")):
    """MSE restricted to step indices divisible by ``cfg.gap``."""
    p, t = _points(pred), _points(truth)
    if p.shape != t.shape:
        raise DataError(f"trajectory length mismatch: {p.shape[0]} vs {t.shape[0]}")
    sel = np.arange(0, p.shape[0], cfg.gap)
    d = p[sel] - t[sel]
    return float(np.mean(d[:, 0] ** 2 + d[:, 1] ** 2 + cfg.theta_weight * d[:, 2] ** 2))


def ego_mse_loss(pred_ego, truth_global, off, cfg=LossConfig()):
    """Squared error of one local-frame prediction.

    The target is the global truth pose pulled into the local frame through
    the current offset. Because the frame change is a rigid transform, the
    value coincides with the global-frame squared error; only the gradient
    bookkeeping differs (the rotation sits on the target, not the output).
    """
    r = to_ego(truth_global, off)
    dx = pred_ego.x - r.x
    dy = pred_ego.y - r.y
    dth = pred_ego.theta - r.theta
    out = dx * dx + dy * dy + cfg.theta_weight * (dth * dth)
    return out if not isinstance(out, float) else float(out)


def _banded_min(dist, band):
    """Row-wise min of a (n, m) distance matrix restricted to |i*m/n - j| <= band."""
    n, m = dist.shape
    out = np.empty(n)
    for i in range(n):
        c = int(round(i * (m - 1) / max(n - 1, 1)))
        lo = max(0, c - band)
        hi = min(m, c + band + 1)
        out[i] = dist[i, lo:hi].min()
    return out


def chamfer_alpha_loss(pred, truth, cfg=LossConfig(kind="Chamfer", theta_weight=0.0),
                       band=None):
    """Two-sided nearest-neighbor mean squared distance, weighted by alpha.

    ``alpha`` scales the prediction-to-truth direction, ``1 - alpha`` the
    truth-to-prediction direction. ``band`` restricts candidate neighbors to
    a diagonal index band (the accelerated mode); None means exact.
    """
    p, t = _points(pred), _points(truth)
    if p.shape[0] == 0 or t.shape[0] == 0:
        raise DataError("cannot score empty trajectories")
    d_tp = _sq_dists(t, p, cfg.theta_weight)
    if band is None:
        fwd = d_tp.min(axis=1).mean()
        bwd = d_tp.min(axis=0).mean()
    else:
        fwd = _banded_min(d_tp, band).mean()
        bwd = _banded_min(d_tp.T, band).mean()
    return float((1.0 - cfg.alpha) * fwd + cfg.alpha * bwd)


def l2_penalty(params, l2):
    """Weight-decay term over the learnable flat vector."""
    if l2 < 0.0:
        raise DataError("l2 must be non-negative")
    p = np.asarray(params, dtype=np.float64)
    return float(l2 * np.sum(p * p))


# ---------------------------------------------------------------------------
# Batched loss + gradient wrt predictions, shared by the training paths.
# Predictions and targets are (B, L, 3) global-frame arrays; the returned
# adjoint has the same shape.
# ---------------------------------------------------------------------------

def batch_loss_grad(preds, targets, cfg, band=CHAMFER_BAND):
    B, L, _ = preds.shape
    w = np.array([1.0, 1.0, cfg.theta_weight])
    if cfg.kind in ("MSE", "EgoMSE"):
        d = preds - targets
        loss = float(np.sum(d * d * w) / (B * L))
        return loss, 2.0 * d * w / (B * L)
    if cfg.kind == "GappedMSE":
        sel = np.arange(0, L, cfg.gap)
        d = preds[:, sel, :] - targets[:, sel, :]
        loss = float(np.sum(d * d * w) / (B * len(sel)))
        grad = np.zeros_like(preds)
        grad[:, sel, :] = 2.0 * d * w / (B * len(sel))
        return loss, grad
    if cfg.kind == "Chamfer":
        loss = 0.0
        grad = np.zeros_like(preds)
        for b in range(B):
            lb, gb = _chamfer_grad_one(preds[b], targets[b], cfg, band)
            loss += lb / B
            grad[b] = gb / B
        return loss, grad
    raise DataError(f"unknown loss kind {cfg.kind!r}")


def _nn_indices(dist, band):
    if band is None:
        return dist.argmin(axis=1)
    n, m = dist.shape
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        c = int(round(i * (m - 1) / max(n - 1, 1)))
        lo = max(0, c - band)
        hi = min(m, c + band + 1)
        out[i] = lo + dist[i, lo:hi].argmin()
    return out


def _chamfer_grad_one(pred, truth, cfg, band):
    """Chamfer loss and its gradient wrt one predicted segment.

    The nearest-neighbor assignment is held fixed for the gradient (the
    loss is piecewise smooth in the predictions).
    """
    n, m = truth.shape[0], pred.shape[0]
    w = np.array([1.0, 1.0, cfg.theta_weight])
    d_tp = _sq_dists(truth, pred, cfg.theta_weight)
    nn_t = _nn_indices(d_tp, band)
    nn_p = _nn_indices(d_tp.T, band)
    fwd = d_tp[np.arange(n), nn_t].mean()
    bwd = d_tp.T[np.arange(m), nn_p].mean()
    loss = (1.0 - cfg.alpha) * fwd + cfg.alpha * bwd
    grad = np.zeros_like(pred)
    diff_b = (pred - truth[nn_p]) * w
    grad += cfg.alpha * 2.0 * diff_b / m
    diff_f = (pred[nn_t] - truth) * w
    np.add.at(grad, nn_t, (1.0 - cfg.alpha) * 2.0 * diff_f / n)
    return float(loss), grad
