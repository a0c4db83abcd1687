"""Training: batched loss/gradient passes, Adam, progressive schedules, and
derivative-free physical-parameter search.

Two gradient paths exist. The dense path serves the egocentric
single-pose-history configuration of every model kind: features carry no
feedback from earlier predictions there, so the network runs as one BLAS
pass over all (segment, step) rows and only the cheap scalar recursions
(actuator lag, offset composition) stay sequential. The sequential path
serves the linear model under the partial/no-transform ablations, where
features do feed back and each step depends on the previous one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import analytical
from .analytical import RobotParams, latency_bin
from .core import Dataset, rollout_start_mask
from .errors import DataError, NumericError
from .evaluation import extract_segments, rollout_batch, stride_starts
from .kernels import chains, dense
from .losses import CHAMFER_BAND, LossConfig, batch_loss_grad, l2_penalty
from .models import (ModelSpec, NORM_EPS, layout_size, param_layout, unpack)

GRAD_MODES = ("raw", "normalized", "clipped")
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    lr: float = 5e-4
    lr_gamma: float = 0.99999
    batch_size: int = 200
    l2: float = 1e-4
    loss: LossConfig = field(default_factory=LossConfig)
    grad_mode: str = "raw"
    clip_norm: float = 10.0
    bptt_truncate: int = 64
    patience: int = 32
    min_delta: float = 1e-12
    updates_per_eval: int = 4
    max_updates_per_stage: int = 192
    max_rows: int = 250_000
    val_segments: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.grad_mode not in GRAD_MODES:
            raise DataError(f"unknown grad mode {self.grad_mode!r}; expected one of {GRAD_MODES}")
        if self.lr <= 0 or not 0 < self.lr_gamma <= 1:
            raise DataError("lr must be positive and lr_gamma in (0, 1]")
        if self.batch_size < 2:
            raise DataError("batch size must be at least 2")
        if self.bptt_truncate < 0:
            raise DataError("bptt_truncate must be >= 0 (0 disables cutting)")


# ---------------------------------------------------------------------------
# Loss and gradient.
# ---------------------------------------------------------------------------

def _standardize(spec, X):
    return (X - spec.norm_mean) / np.sqrt(spec.norm_var + NORM_EPS)


def _lag_alphas(spec, dt):
    r = spec.robot
    a_s = np.ones_like(dt) if r.tau_s < 1e-6 else 1.0 - np.exp(-dt / r.tau_s)
    a_w = np.ones_like(dt) if r.tau_w < 1e-6 else 1.0 - np.exp(-dt / r.tau_w)
    return a_s, a_w


def _lag_targets(spec, bins):
    j = analytical.latency_bin(spec.K, spec.T, spec.robot.cmd_latency)
    return (spec.robot.slip_gain_s * bins[:, :, 2 * j],
            spec.robot.slip_gain_w * bins[:, :, 2 * j + 1])


def _formulated_local(spec, seg):
    """Local one-step formulated predictions from the uncorrected lag chain."""
    bins, dt, twist0 = seg["bins"], seg["dt"], seg["twist0"]
    B, L = dt.shape
    tgt_s, tgt_w = _lag_targets(spec, bins)
    a_s, a_w = _lag_alphas(spec, dt)
    zero = np.zeros((B, L))
    s = chains.twist_chain_fwd(np.ascontiguousarray(twist0[:, 0]), tgt_s, a_s, zero)
    w = chains.twist_chain_fwd(np.ascontiguousarray(twist0[:, 1]), tgt_w, a_w, zero)
    r = np.zeros((B, L, 3))
    r[:, :, 0] = s * dt
    r[:, :, 2] = w * dt
    return r


def _dense_features(spec, seg, r_form=None):
    bins = seg["bins"]
    B, L, _ = bins.shape
    X = np.zeros((B * L, spec.input_dim()))
    X[:, 3:3 + 2 * spec.K] = bins.reshape(B * L, -1)
    if spec.kind == "mlp_plus_formulated":
        X[:, 3 + 2 * spec.K:] = r_form.reshape(B * L, 3)
    return _standardize(spec, X)


def dense_loss_and_grad(spec, seg, pv=None, cfg=LossConfig(), trunc=0,
                        update_running=False, band=CHAMFER_BAND):
    """One training pass over a batch on the dense path.

    Returns ``(loss, grad, preds)`` with ``preds`` the global-frame
    predictions (B, L, 3). Requires the egocentric frame with single-pose
    history; anything else feeds predictions back into the features and
    belongs to the sequential path or the scalar reference.
    """
    if spec.mode != "ego" or spec.H != 1:
        raise DataError("dense training pass requires mode='ego' and H=1")
    pv = spec.params if pv is None else pv
    bins, dt, start, targets = seg["bins"], seg["dt"], seg["start_pose"], seg["targets"]
    B, L = dt.shape
    r_form = None
    if spec.kind in ("mlp_plus_formulated", "param_only"):
        r_form = _formulated_local(spec, seg)
    if spec.kind == "param_only":
        g = chains.offset_chain_fwd(start, r_form)
        loss, _ = batch_loss_grad(g, targets, cfg, band=band)
        return loss, np.zeros(0), g
    X = _dense_features(spec, seg, r_form)
    Y, cache = net_train_forward_checked(X, spec, pv, update_running)
    if spec.kind in ("lr", "mlp"):
        r_local = np.ascontiguousarray(Y.reshape(B, L, 3))
    elif spec.kind == "mlp_plus_formulated":
        r_local = r_form + Y.reshape(B, L, 3)
    else:  # formulated_plus_mlp: corrections enter the actuator chain
        corr = Y.reshape(B, L, 2)
        tgt_s, tgt_w = _lag_targets(spec, bins)
        a_s, a_w = _lag_alphas(spec, dt)
        s = chains.twist_chain_fwd(np.ascontiguousarray(seg["twist0"][:, 0]),
                                   tgt_s, a_s, np.ascontiguousarray(corr[:, :, 0]))
        w = chains.twist_chain_fwd(np.ascontiguousarray(seg["twist0"][:, 1]),
                                   tgt_w, a_w, np.ascontiguousarray(corr[:, :, 1]))
        r_local = np.zeros((B, L, 3))
        r_local[:, :, 0] = s * dt
        r_local[:, :, 2] = w * dt
    r_local = np.ascontiguousarray(r_local)
    g = chains.offset_chain_fwd(start, r_local)
    loss, ag = batch_loss_grad(g, targets, cfg, band=band)
    dr = chains.offset_chain_bwd(start, r_local, g, np.ascontiguousarray(ag),
                                 np.int64(trunc))
    if spec.kind == "formulated_plus_mlp":
        dcorr_s = chains.twist_chain_bwd(np.ascontiguousarray(dr[:, :, 0] * dt),
                                         a_s, np.int64(trunc))
        dcorr_w = chains.twist_chain_bwd(np.ascontiguousarray(dr[:, :, 2] * dt),
                                         a_w, np.int64(trunc))
        dY = np.stack([dcorr_s, dcorr_w], axis=2).reshape(B * L, 2)
    else:
        dY = dr.reshape(B * L, 3)
    grad, _ = dense.net_train_backward(dY, cache, spec)
    return loss, grad, g


def net_train_forward_checked(X, spec, pv, update_running):
    if spec.uses_mlp() and X.shape[0] < 2:
        raise DataError("train-mode batchnorm needs a batch of at least 2 samples")
    return dense.net_train_forward(X, spec, pv=pv, update_running=update_running)


def seq_lr_loss_and_grad(spec, seg, pv=None, cfg=LossConfig(), trunc=0):
    """Training pass for the linear model under feedback-carrying frame modes."""
    if spec.kind != "lr" or spec.H != 1:
        raise DataError("sequential training pass covers the linear model with H=1")
    if cfg.kind not in ("MSE", "EgoMSE") or cfg.theta_weight != 1.0:
        raise DataError("sequential pass supports the plain squared-error loss only")
    pv = spec.params if pv is None else pv
    from .ego import MODES
    bins, start, targets = seg["bins"], seg["start_pose"], seg["targets"]
    B, L, _ = bins.shape
    feats = np.zeros((B, L, spec.input_dim()))
    feats[:, :, 3:] = bins
    views = unpack(np.asarray(pv, dtype=np.float64), param_layout(spec))
    inv_std = 1.0 / np.sqrt(spec.norm_var + NORM_EPS)
    loss, dW, db, preds = chains.lr_seq(MODES.index(spec.mode),
                                        np.ascontiguousarray(views["W"]),
                                        np.ascontiguousarray(views["b"]),
                                        feats, spec.norm_mean, inv_std,
                                        start, targets, trunc)
    return loss, np.concatenate([dW.ravel(), db]), preds


def loss_and_grad(spec, seg, pv=None, cfg=LossConfig(), trunc=0,
                  update_running=False, l2=0.0):
    """Dispatch to the right training pass and fold in the weight penalty."""
    if spec.mode == "ego" and spec.H == 1:
        loss, grad, preds = dense_loss_and_grad(spec, seg, pv, cfg, trunc,
                                                update_running=update_running)
    elif spec.kind == "lr" and spec.H == 1:
        loss, grad, preds = seq_lr_loss_and_grad(spec, seg, pv, cfg, trunc)
    else:
        raise DataError(f"no training pass for kind={spec.kind!r} mode={spec.mode!r} "
                        f"H={spec.H}; only the egocentric H=1 configuration is "
                        "trainable for networks")
    p = spec.params if pv is None else np.asarray(pv)
    if l2 > 0.0 and p.size:
        loss += l2_penalty(p, l2)
        grad = grad + 2.0 * l2 * p
    return loss, grad, preds


# ---------------------------------------------------------------------------
# Optimizer.
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @staticmethod
    def for_params(n):
        return AdamState(m=np.zeros(n), v=np.zeros(n))


def adam_step(params, grad, state, lr):
    state.t += 1
    state.m = ADAM_BETA1 * state.m + (1 - ADAM_BETA1) * grad
    state.v = ADAM_BETA2 * state.v + (1 - ADAM_BETA2) * grad * grad
    mhat = state.m / (1 - ADAM_BETA1 ** state.t)
    vhat = state.v / (1 - ADAM_BETA2 ** state.t)
    params -= lr * mhat / (np.sqrt(vhat) + ADAM_EPS)


def transform_grad(grad, mode, clip_norm):
    if mode == "raw":
        return grad
    norm = float(np.linalg.norm(grad))
    if mode == "normalized":
        return grad / (norm + 1e-12)
    return grad if norm <= clip_norm else grad * (clip_norm / norm)


# ---------------------------------------------------------------------------
# Stage and progressive training loops.
# ---------------------------------------------------------------------------

def sample_batch(ds, length, spec, batch_size, rng):
    mask = rollout_start_mask(ds, length, window_s=spec.T, history=spec.H)
    pool = np.flatnonzero(mask)
    if len(pool) == 0:
        raise DataError(f"dataset holds no segment long enough for length {length}")
    return rng.choice(pool, size=batch_size, replace=True)


def validation_loss(spec, ds, length, max_segments=64):
    """Mean per-segment rollout position RMSE (meters) over strided anchors.

    Early stopping watches this, not the training objective: heading is
    excluded and segments are strided deterministically, so the number is
    comparable across stages and training seeds.
    """
    starts = stride_starts(ds, length, spec, max_segments)
    if len(starts) == 0:
        raise DataError(f"validation set holds no segment of length {length}")
    seg = extract_segments(ds, starts, length, spec)
    preds = rollout_batch(spec, ds, starts, length, seg=seg)
    d = preds[:, :, :2] - seg["targets"][:, :, :2]
    return float(np.mean(np.sqrt(np.mean(np.sum(d * d, axis=2), axis=1))))


def _effective_batch(tcfg, length):
    return max(2, min(tcfg.batch_size, tcfg.max_rows // max(1, length)))


def train_stage(spec, train_ds, val_ds, length, tcfg, rng=None, lr0=None,
                log=None):
    """Fixed-length training with early stopping on validation RMSE.

    Mutates ``spec.params`` (and batchnorm statistics) in place, restoring
    the best-by-validation snapshot before returning. Returns a record dict
    with the loss trace.
    """
    rng = np.random.default_rng(tcfg.seed) if rng is None else rng
    pool = np.flatnonzero(rollout_start_mask(train_ds, length,
                                             window_s=spec.T, history=spec.H))
    if len(pool) == 0:
        raise DataError(f"no training segment of length {length}")
    batch = _effective_batch(tcfg, length)
    adam = AdamState.for_params(spec.params.size)
    lr = tcfg.lr if lr0 is None else lr0
    best_val = validation_loss(spec, val_ds, length, tcfg.val_segments)
    best_pv = spec.params.copy()
    best_bn = spec.bn_stats.copy()
    evals_since = 0
    n_updates = 0
    trace = [{"updates": 0, "val": best_val, "train": None}]
    t0 = time.monotonic()
    while n_updates < tcfg.max_updates_per_stage:
        train_loss = None
        for _ in range(tcfg.updates_per_eval):
            if n_updates >= tcfg.max_updates_per_stage:
                break
            starts = rng.choice(pool, size=batch, replace=True)
            seg = extract_segments(train_ds, starts, length, spec)
            train_loss, grad, _ = loss_and_grad(spec, seg, cfg=tcfg.loss,
                                                trunc=tcfg.bptt_truncate,
                                                update_running=True, l2=tcfg.l2)
            if not np.isfinite(train_loss):
                raise NumericError(
                    f"non-finite training loss at length {length}, "
                    f"update {n_updates} (lr {lr:.3g})")
            if spec.params.size:
                adam_step(spec.params,
                          transform_grad(grad, tcfg.grad_mode, tcfg.clip_norm),
                          adam, lr)
            lr *= tcfg.lr_gamma
            n_updates += 1
        val = validation_loss(spec, val_ds, length, tcfg.val_segments)
        trace.append({"updates": n_updates, "val": val, "train": train_loss})
        if log:
            log(f"length {length}: update {n_updates} train {train_loss:.6g} val {val:.6g}")
        if val < best_val - tcfg.min_delta:
            best_val = val
            best_pv = spec.params.copy()
            best_bn = spec.bn_stats.copy()
            evals_since = 0
        else:
            evals_since += 1
            if evals_since >= tcfg.patience:
                break
        if not spec.params.size:
            break
    spec.params[:] = best_pv
    if spec.bn_stats.size:
        spec.bn_stats[:] = best_bn
    return {"length": int(length), "updates": n_updates, "best_val": best_val,
            "batch": batch, "lr_final": lr, "seconds": time.monotonic() - t0,
            "trace": trace}


def stage_lengths(max_length):
    if max_length < 1:
        raise DataError("max stage length must be >= 1")
    out = []
    L = 1
    while L < max_length:
        out.append(L)
        L *= 2
    out.append(max_length)
    return out


def progressive_train(spec, train_ds, val_ds, max_length, tcfg, log=None):
    """Train through doubling rollout lengths, warm-starting each stage.

    Returns the list of per-stage records. The learning-rate schedule runs
    continuously across stages; the optimizer state resets per stage because
    each length change reshapes the loss surface.
    """
    rng = np.random.default_rng(tcfg.seed)
    records = []
    lr = tcfg.lr
    for L in stage_lengths(max_length):
        rec = train_stage(spec, train_ds, val_ds, L, tcfg, rng=rng, lr0=lr,
                          log=log)
        lr = rec["lr_final"]
        records.append(rec)
    return records


# ---------------------------------------------------------------------------
# Derivative-free search over the physical parameters.
# ---------------------------------------------------------------------------

SEARCHABLE = ("slip_gain_s", "slip_gain_w", "tau_s", "tau_w", "cmd_latency")
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class SearchResult:
    robot: RobotParams
    value: float
    evals: int
    history: list


def _search_objective(ds, length, max_segments, T, K, base):
    spec0 = ModelSpec(kind="param_only", T=T, K=K, robot=base)
    starts = stride_starts(ds, length, spec0, max_segments)
    if len(starts) == 0:
        raise DataError(f"no segment of length {length} to fit against")
    seg = extract_segments(ds, starts, length, spec0)
    cfg = LossConfig()

    def objective(robot):
        spec = ModelSpec(kind="param_only", T=T, K=K, robot=robot)
        preds = rollout_batch(spec, ds, starts, length, seg=seg)
        loss, _ = batch_loss_grad(preds, seg["targets"], cfg)
        return loss

    return objective


def _golden_section(fn, lo, hi, n_evals):
    """Golden-section minimization of a 1-d function on [lo, hi]."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    used = 2
    while used < n_evals:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
        used += 1
    return (c, fc) if fc < fd else (d, fd)


def param_search(ds, names=SEARCHABLE, bounds=None, budget=500,
                 strategy="coordinate", seed=0, length=64, max_segments=64,
                 base=None, T=0.2, K=5, line_evals=14):
    """Fit physical parameters by minimizing rollout error on the dataset.

    ``random`` samples the box uniformly; ``coordinate`` runs cyclic
    golden-section line searches, one parameter at a time, halving each
    line's bracket around the incumbent after every full cycle so later
    passes refine rather than re-scan. The budget counts objective
    evaluations (each one a batch of sequential rollouts).
    """
    base = RobotParams() if base is None else base
    default_bounds = {"slip_gain_s": (0.5, 1.5), "slip_gain_w": (0.5, 1.5),
                      "tau_s": (0.0, 0.5), "tau_w": (0.0, 0.5),
                      "cmd_latency": (0.0, 0.12)}
    for n in names:
        if n not in RobotParams.FIELD_NAMES:
            raise DataError(f"unknown robot parameter {n!r}")
    bounds = {n: default_bounds.get(n, (0.5, 1.5)) for n in names} if bounds is None \
        else dict(bounds)
    objective = _search_objective(ds, length, max_segments, T, K, base)
    history = []
    evals = 0

    def run(robot):
        nonlocal evals
        v = objective(robot)
        evals += 1
        history.append((evals, {n: getattr(robot, n) for n in names}, v))
        return v

    if strategy == "random":
        rng = np.random.default_rng(seed)
        best_r, best_v = base, run(base)
        while evals < budget:
            vals = {n: rng.uniform(*bounds[n]) for n in names}
            r = replace(base, **vals)
            v = run(r)
            if v < best_v:
                best_r, best_v = r, v
        return SearchResult(best_r, best_v, evals, history)
    if strategy != "coordinate":
        raise DataError(f"unknown search strategy {strategy!r}")

    cont = [n for n in names if n != "cmd_latency"]

    def refine(start, local_budget):
        cur = {n: float(np.clip(getattr(start, n), *bounds[n])) for n in cont}
        r0 = replace(start, **cur)
        v0 = run(r0)
        used = 1
        span = {n: (bounds[n][1] - bounds[n][0]) for n in cont}
        while used < local_budget and evals < budget:
            improved_any = False
            for n in cont:
                remaining = min(local_budget - used, budget - evals)
                if remaining < 2:
                    break
                k = min(line_evals, remaining)
                lo = max(bounds[n][0], cur[n] - 0.5 * span[n])
                hi = min(bounds[n][1], cur[n] + 0.5 * span[n])

                def fn(x, _n=n):
                    return run(replace(r0, **{**cur, _n: float(x)}))

                x, v = _golden_section(fn, lo, hi, k)
                used += k
                if v < v0:
                    cur[n] = float(x)
                    v0 = v
                    r0 = replace(r0, **cur)
                    improved_any = True
            for n in cont:
                span[n] *= 0.5
            if not improved_any:
                break
        return r0, v0

    # Latency reaches the rollout only through its window-bin index, so the
    # objective is a staircase in that coordinate and a golden section cannot
    # rank the steps. Refine the smooth parameters once per distinct bin and
    # keep the best bin instead.
    if "cmd_latency" in names:
        step = T / K
        lo, hi = bounds["cmd_latency"]
        lat_cands, seen = [], set()
        for k in range(int(np.floor(lo / step)), int(np.ceil(hi / step)) + 1):
            v = float(np.clip(k * step, lo, hi))
            b = latency_bin(K, T, v)
            if b not in seen:
                seen.add(b)
                lat_cands.append(v)
    else:
        lat_cands = [getattr(base, "cmd_latency")]
    per = max(2, budget // len(lat_cands))
    best_r, best_v = None, np.inf
    for lat in lat_cands:
        if evals >= budget:
            break
        r, v = refine(replace(base, cmd_latency=lat), per)
        if v < best_v:
            best_r, best_v = r, v
    # spend any remainder polishing the winning bin
    if budget - evals >= 2:
        r, v = refine(best_r, budget - evals)
        if v < best_v:
            best_r, best_v = r, v
    return SearchResult(best_r, best_v, evals, history)
