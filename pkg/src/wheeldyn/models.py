"""Model families behind a single step interface: features in, ego pose out.

Four families share one calling convention:

``lr``
    Affine map from the feature vector to the per-step pose displacement.
``mlp``
    Fully-connected net (default hidden sizes 32, 16, 8) with batch
    normalization and ReLU on the hidden layers, linear output head.
``formulated_plus_mlp``
    The formulated model supplies the actuator state; the net emits a twist
    correction (delta s, delta omega) that is added to that state before the
    kinematics integrate the pose. The correction persists in the actuator
    state, so the net shapes the dynamics, not just one step.
``mlp_plus_formulated``
    The formulated model predicts the next local pose; that prediction is
    appended to the features and the net emits a residual added to it.

``param_only`` is the formulated model alone: no learnable vector, just
:class:`~wheeldyn.analytical.RobotParams` fit by derivative-free search.

Parameters live in one flat float64 vector whose layout is a function of the
spec; every forward accepts either that vector or a same-layout list of tape
nodes, so the reference gradient path reuses the exact code under test.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np

from . import analytical, autodiff as ad
from .analytical import RobotParams
from .core import ChassisTwist, Pose, TICKS_PER_SECOND, to_ticks
from .errors import DataError

KINDS = ("lr", "mlp", "formulated_plus_mlp", "mlp_plus_formulated", "param_only")
LEARNED_KINDS = ("lr", "mlp", "formulated_plus_mlp", "mlp_plus_formulated")
HYBRID_KINDS = ("formulated_plus_mlp", "mlp_plus_formulated")
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
NORM_EPS = 1e-8
CHECKPOINT_MAGIC = "wheeldyn-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class CommandWindow:
    """K zero-order-hold command samples covering the last T seconds.

    Sample j (oldest first) is the command in effect at now - (K-1-j)*T/K;
    the newest sample sits at the present moment.
    """

    bins: np.ndarray
    T: float
    K: int

    def offsets(self):
        step = self.T / self.K
        return np.array([-(self.K - 1 - j) * step for j in range(self.K)])


def window_offsets_ticks(T, K):
    T_ticks = int(np.rint(T * TICKS_PER_SECOND))
    return np.array([-(((K - 1 - j) * T_ticks + K // 2) // K) for j in range(K)],
                    dtype=np.int64)


def bins_for_ticks(cmd_ticks, cmd_vals, query_ticks, T, K):
    """Vectorized window sampling: (n,) tick queries to (n, K, 2) bins.

    Zero-order hold takes the latest command at or before each sample time;
    sample times older than the whole command stream back-fill from the
    first command.
    """
    if len(cmd_ticks) == 0:
        raise DataError("cannot sample a command window from an empty command stream")
    query_ticks = np.asarray(query_ticks, dtype=np.int64).reshape(-1)
    offs = window_offsets_ticks(T, K)
    sample = query_ticks[:, None] + offs[None, :]
    idx = np.searchsorted(cmd_ticks, sample.ravel(), side="right") - 1
    np.clip(idx, 0, None, out=idx)
    return cmd_vals[idx].reshape(len(query_ticks), K, 2)


def build_window(cmd_ticks, cmd_vals, now_tick, T, K):
    bins = bins_for_ticks(cmd_ticks, cmd_vals, np.array([now_tick]), T, K)[0]
    return CommandWindow(bins=bins, T=T, K=int(K))


def featurize(st, window):
    """Flatten state and window into the model input layout.

    History poses come first (oldest to newest, x/y/theta each), then the
    command bins (oldest to newest, s/omega each). Entries may be tape nodes
    when the state was produced on tape, so the result is a plain list.
    """
    feats = []
    for p in st.history:
        feats.extend((p.x, p.y, p.theta))
    for j in range(window.K):
        feats.append(float(window.bins[j][0]))
        feats.append(float(window.bins[j][1]))
    return feats


def apply_norm(feats, mean, var):
    scale = 1.0 / np.sqrt(var + NORM_EPS)
    return [(f - mean[i]) * scale[i] for i, f in enumerate(feats)]


# ---------------------------------------------------------------------------
# Parameter layout.
# ---------------------------------------------------------------------------

def base_feature_dim(H, K):
    return H * 3 + K * 2


@dataclass
class ModelSpec:
    """Everything needed to run one model: kind, dims, parameters, stats."""

    kind: str
    H: int = 1
    T: float = 0.2
    K: int = 5
    mode: str = "ego"
    hidden: tuple = (32, 16, 8)
    robot: RobotParams = field(default_factory=RobotParams)
    params: np.ndarray = field(default_factory=lambda: np.empty(0))
    bn_stats: np.ndarray = field(default_factory=lambda: np.empty(0))
    norm_mean: np.ndarray = field(default_factory=lambda: np.empty(0))
    norm_var: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown model kind {self.kind!r}")
        if self.H < 1 or self.K < 1 or self.T <= 0.0:
            raise DataError("window dims must satisfy H >= 1, K >= 1, T > 0")
        from .ego import check_mode
        check_mode(self.mode)
        d = self.input_dim()
        if self.norm_mean.size == 0:
            self.norm_mean = np.zeros(d)
            self.norm_var = np.ones(d)
        if self.norm_mean.shape != (d,) or self.norm_var.shape != (d,):
            raise DataError(f"norm stats must have shape ({d},)")
        expected = layout_size(param_layout(self))
        if self.params.size == 0 and expected:
            self.params = np.zeros(expected)
        if self.params.size != expected:
            raise DataError(f"parameter vector has {self.params.size} entries, "
                            f"layout for kind={self.kind} needs {expected}")
        bn_expected = layout_size(bn_layout(self))
        if self.bn_stats.size == 0 and bn_expected:
            self.bn_stats = init_bn_stats(self)
        if self.bn_stats.size != bn_expected:
            raise DataError(f"batchnorm stats have {self.bn_stats.size} entries, expected {bn_expected}")
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        self.bn_stats = np.ascontiguousarray(self.bn_stats, dtype=np.float64)
        self.norm_mean = np.ascontiguousarray(self.norm_mean, dtype=np.float64)
        self.norm_var = np.ascontiguousarray(self.norm_var, dtype=np.float64)

    def input_dim(self):
        d = base_feature_dim(self.H, self.K)
        if self.kind == "mlp_plus_formulated":
            d += 3
        return d

    def output_dim(self):
        return 2 if self.kind == "formulated_plus_mlp" else 3

    def uses_mlp(self):
        return self.kind in ("mlp", "formulated_plus_mlp", "mlp_plus_formulated")

    def copy(self):
        return ModelSpec(kind=self.kind, H=self.H, T=self.T, K=self.K, mode=self.mode,
                         hidden=tuple(self.hidden), robot=self.robot,
                         params=self.params.copy(), bn_stats=self.bn_stats.copy(),
                         norm_mean=self.norm_mean.copy(), norm_var=self.norm_var.copy())


def param_layout(spec):
    """Ordered (name, shape) pairs describing the flat parameter vector."""
    d = spec.input_dim()
    if spec.kind == "lr":
        return [("W", (3, d)), ("b", (3,))]
    if spec.kind == "param_only":
        return []
    layout = []
    sizes = (d,) + tuple(spec.hidden)
    for i in range(len(spec.hidden)):
        layout += [(f"W{i + 1}", (sizes[i + 1], sizes[i])), (f"b{i + 1}", (sizes[i + 1],)),
                   (f"g{i + 1}", (sizes[i + 1],)), (f"beta{i + 1}", (sizes[i + 1],))]
    out = spec.output_dim()
    n = len(spec.hidden) + 1
    layout += [(f"W{n}", (out, sizes[-1])), (f"b{n}", (out,))]
    return layout


def bn_layout(spec):
    if not spec.uses_mlp():
        return []
    layout = []
    for i, h in enumerate(spec.hidden):
        layout += [(f"rm{i + 1}", (h,)), (f"rv{i + 1}", (h,))]
    return layout


def layout_size(layout):
    return int(sum(np.prod(shape) for _, shape in layout))


def layout_offsets(layout):
    offs = {}
    pos = 0
    for name, shape in layout:
        offs[name] = (pos, shape)
        pos += int(np.prod(shape))
    return offs


def unpack(vec, layout):
    """Views into a flat vector, one per named block (shares memory)."""
    out = {}
    for name, (pos, shape) in layout_offsets(layout).items():
        size = int(np.prod(shape))
        out[name] = vec[pos:pos + size].reshape(shape)
    return out


def init_bn_stats(spec):
    vec = np.empty(layout_size(bn_layout(spec)))
    views = unpack(vec, bn_layout(spec))
    for name, arr in views.items():
        arr[:] = 0.0 if name.startswith("rm") else 1.0
    return vec


def init_params(spec, seed=0):
    """Fresh parameter vector: uniform +-1/sqrt(fan_in) affine blocks, unit
    batchnorm scales, and zero-initialized hybrid output heads."""
    rng = np.random.default_rng(seed)
    layout = param_layout(spec)
    vec = np.zeros(layout_size(layout))
    views = unpack(vec, layout)
    n_affine = 1 if spec.kind == "lr" else len(spec.hidden) + 1
    for i in range(1, n_affine + 1):
        wname, bname = (("W", "b") if spec.kind == "lr" else (f"W{i}", f"b{i}"))
        W = views[wname]
        bound = 1.0 / np.sqrt(W.shape[1])
        W[:] = rng.uniform(-bound, bound, W.shape)
        views[bname][:] = rng.uniform(-bound, bound, views[bname].shape)
        if spec.kind == "lr":
            break
    for name, arr in views.items():
        if name.startswith("g"):
            arr[:] = 1.0
        elif name.startswith("beta"):
            arr[:] = 0.0
    if spec.kind in HYBRID_KINDS:
        head = f"W{len(spec.hidden) + 1}"
        views[head][:] = 0.0
        views[f"b{len(spec.hidden) + 1}"][:] = 0.0
    return vec


def make_spec(kind, H=1, T=0.2, K=5, mode="ego", hidden=(32, 16, 8),
              robot=None, seed=0):
    spec = ModelSpec(kind=kind, H=H, T=T, K=K, mode=mode, hidden=tuple(hidden),
                     robot=robot if robot is not None else RobotParams())
    if kind in LEARNED_KINDS:
        spec.params = init_params(spec, seed=seed)
        spec.__post_init__()
    return spec


# ---------------------------------------------------------------------------
# Forward passes. ``pv`` is indexable by flat position: a numpy vector on the
# fast path, a list of tape nodes on the reference path. The code only ever
# uses indexing and arithmetic so both work.
# ---------------------------------------------------------------------------

def _affine(pv, offs, wname, bname, x):
    pos, (rows, cols) = offs[wname]
    bpos, _ = offs[bname]
    out = []
    for i in range(rows):
        acc = pv[bpos + i]
        base = pos + i * cols
        for j in range(cols):
            acc = acc + pv[base + j] * x[j]
        out.append(acc)
    return out


def lr_forward(feats, pv, spec):
    if len(feats) != spec.input_dim():
        raise DataError(f"feature vector has {len(feats)} entries, expected {spec.input_dim()}")
    offs = layout_offsets(param_layout(spec))
    x = apply_norm(feats, spec.norm_mean, spec.norm_var)
    return _affine(pv, offs, "W", "b", x)


def _bn_eval(x, pv, offs, bn, bn_offs, i):
    gpos, _ = offs[f"g{i}"]
    bpos, _ = offs[f"beta{i}"]
    mpos, _ = bn_offs[f"rm{i}"]
    vpos, _ = bn_offs[f"rv{i}"]
    out = []
    for u in range(len(x)):
        inv = 1.0 / np.sqrt(bn[vpos + u] + BN_EPS)
        out.append(pv[gpos + u] * ((x[u] - bn[mpos + u]) * inv) + pv[bpos + u])
    return out


def mlp_forward(feats, pv, spec, bn_stats=None):
    """Eval-mode forward for one sample (running batchnorm statistics).

    Train-mode forwards are inherently batched; see :func:`mlp_forward_batch`.
    """
    if len(feats) != spec.input_dim():
        raise DataError(f"feature vector has {len(feats)} entries, expected {spec.input_dim()}")
    bn = spec.bn_stats if bn_stats is None else bn_stats
    offs = layout_offsets(param_layout(spec))
    bn_offs = layout_offsets(bn_layout(spec))
    x = apply_norm(feats, spec.norm_mean, spec.norm_var)
    for i in range(1, len(spec.hidden) + 1):
        x = _affine(pv, offs, f"W{i}", f"b{i}", x)
        x = _bn_eval(x, pv, offs, bn, bn_offs, i)
        x = [ad.relu(v) for v in x]
    return _affine(pv, offs, f"W{len(spec.hidden) + 1}", f"b{len(spec.hidden) + 1}", x)


def mlp_forward_batch(batch, pv, spec, train, bn_stats=None, update_running=False):
    """Batched MLP forward; in train mode normalization uses batch statistics.

    ``batch`` is a list of raw feature lists. Returns a list of output lists.
    Train mode requires at least two samples (batch variance is undefined
    otherwise) and, when ``update_running`` is set, folds the batch moments
    into the running statistics with momentum 0.1 (variance unbiased).
    """
    n = len(batch)
    if train and n < 2:
        raise DataError("train-mode batchnorm needs a batch of at least 2 samples")
    bn = spec.bn_stats if bn_stats is None else bn_stats
    offs = layout_offsets(param_layout(spec))
    bn_offs = layout_offsets(bn_layout(spec))
    xs = [apply_norm(f, spec.norm_mean, spec.norm_var) for f in batch]
    for i in range(1, len(spec.hidden) + 1):
        xs = [_affine(pv, offs, f"W{i}", f"b{i}", x) for x in xs]
        if train:
            width = len(xs[0])
            gpos, _ = offs[f"g{i}"]
            bpos, _ = offs[f"beta{i}"]
            new_xs = [[None] * width for _ in range(n)]
            for u in range(width):
                col = [x[u] for x in xs]
                mean = ad.mean(col)
                var = ad.mean([ad.square(c - mean) for c in col])
                inv = 1.0 / ad.sqrt(var + BN_EPS)
                for r in range(n):
                    new_xs[r][u] = pv[gpos + u] * ((col[r] - mean) * inv) + pv[bpos + u]
                if update_running:
                    mpos, _ = bn_offs[f"rm{i}"]
                    vpos, _ = bn_offs[f"rv{i}"]
                    m = mean.data if isinstance(mean, ad.Value) else float(mean)
                    v = var.data if isinstance(var, ad.Value) else float(var)
                    v_unbiased = v * n / (n - 1)
                    bn[mpos + u] = (1 - BN_MOMENTUM) * bn[mpos + u] + BN_MOMENTUM * m
                    bn[vpos + u] = (1 - BN_MOMENTUM) * bn[vpos + u] + BN_MOMENTUM * v_unbiased
            xs = new_xs
        else:
            xs = [_bn_eval(x, pv, offs, bn, bn_offs, i) for x in xs]
        xs = [[ad.relu(v) for v in x] for x in xs]
    last = len(spec.hidden) + 1
    return [_affine(pv, offs, f"W{last}", f"b{last}", x) for x in xs]


def net_forward(feats, pv, spec, bn_stats=None):
    if spec.kind == "lr":
        return lr_forward(feats, pv, spec)
    return mlp_forward(feats, pv, spec, bn_stats=bn_stats)


def _formulated_local_step(st, window, robot, tw_state, dt):
    """Formulated prediction in the current local frame (from newest history pose)."""
    start = st.history[-1]
    return analytical.formulated_step(start, tw_state, window, robot, dt)


def predict_step(spec, st, window, tw_state, dt, pv=None, bn_stats=None):
    """One eval-mode model step.

    Returns ``(r_hat, tw_new)``: the predicted next pose in the current
    local frame and the advanced twist state. Pure families pass the twist
    through untouched; formulated families evolve it.
    """
    pv = spec.params if pv is None else pv
    if spec.kind == "param_only":
        return _formulated_local_step(st, window, spec.robot, tw_state, dt)
    feats = featurize(st, window)
    if spec.kind == "lr" or spec.kind == "mlp":
        out = net_forward(feats, pv, spec, bn_stats=bn_stats)
        return Pose(out[0], out[1], out[2]), tw_state
    if spec.kind == "formulated_plus_mlp":
        j = analytical.latency_bin(window.K, window.T, spec.robot.cmd_latency)
        s_c, w_c = float(window.bins[j][0]), float(window.bins[j][1])
        s_lag = analytical.lag_update(tw_state.s, spec.robot.slip_gain_s * s_c, dt, spec.robot.tau_s)
        w_lag = analytical.lag_update(tw_state.omega, spec.robot.slip_gain_w * w_c, dt, spec.robot.tau_w)
        corr = net_forward(feats, pv, spec, bn_stats=bn_stats)
        tw_new = ChassisTwist(s_lag + corr[0], w_lag + corr[1])
        return analytical.kinematics_step(st.history[-1], tw_new, dt), tw_new
    # mlp_plus_formulated: residual on top of the formulated local prediction.
    r_form, tw_new = _formulated_local_step(st, window, spec.robot, tw_state, dt)
    res = net_forward(feats + [r_form.x, r_form.y, r_form.theta], pv, spec, bn_stats=bn_stats)
    return Pose(r_form.x + res[0], r_form.y + res[1], r_form.theta + res[2]), tw_new


def estimate_twist(traj, indices):
    """Body-frame twist at given pose indices from backward differences.

    Uses the pose one frame earlier, so only past observations enter.
    Indices at a segment start (no predecessor) get zero twist.
    """
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    out = np.zeros((len(indices), 2))
    seg = np.zeros(len(traj), dtype=bool)
    seg[traj.segment_starts] = True
    ok = (indices > 0) & ~seg[indices]
    if ok.any():
        i = indices[ok]
        dt = (traj.ticks[i] - traj.ticks[i - 1]) / TICKS_PER_SECOND
        d = traj.xytheta[i] - traj.xytheta[i - 1]
        # project onto the heading at the step start: an Euler displacement
        # lies exactly along it, so Euler-generated data is recovered exactly
        th = traj.xytheta[i - 1, 2]
        out[ok, 0] = (d[:, 0] * np.cos(th) + d[:, 1] * np.sin(th)) / dt
        out[ok, 1] = d[:, 2] / dt
    return out


def formulated_feature_block(bins, twist, robot, dt, T, K):
    """Vectorized one-step formulated outputs used as extra features.

    ``bins``: (n, K, 2) windows; ``twist``: (n, 2) actuator states. In the
    local frame the start pose is the origin, so one Euler step can never
    move sideways: the block is (s*dt, 0, omega*dt) after the lag update.
    """
    j = analytical.latency_bin(K, T, robot.cmd_latency)
    tgt_s = robot.slip_gain_s * bins[:, j, 0]
    tgt_w = robot.slip_gain_w * bins[:, j, 1]
    a_s = 1.0 if robot.tau_s < 1e-6 else 1.0 - np.exp(-dt / robot.tau_s)
    a_w = 1.0 if robot.tau_w < 1e-6 else 1.0 - np.exp(-dt / robot.tau_w)
    s1 = twist[:, 0] + (tgt_s - twist[:, 0]) * a_s
    w1 = twist[:, 1] + (tgt_w - twist[:, 1]) * a_w
    out = np.zeros((len(bins), 3))
    out[:, 0] = s1 * dt
    out[:, 2] = w1 * dt
    return out


def compute_norm_stats(spec, ds, max_samples=100_000, seed=0):
    """Per-feature mean/variance over the training set, written into the spec.

    History features in ego mode are identically zero (unit variance kept via
    the epsilon guard); command bins and, for the residual hybrid, one-step
    formulated outputs are sampled at every valid rollout start.
    """
    from .core import rollout_start_mask
    mask = rollout_start_mask(ds, 1, window_s=spec.T, history=spec.H)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise DataError("no valid rollout starts to compute normalization stats from")
    if len(idx) > max_samples:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(idx, size=max_samples, replace=False))
    bins = bins_for_ticks(ds.cmd_ticks, ds.cmd_vals, ds.poses.ticks[idx], spec.T, spec.K)
    cols = [np.zeros((len(idx), spec.H * 3)), bins.reshape(len(idx), -1)]
    if spec.mode != "ego":
        hist = ds.poses.xytheta[idx].copy()
        if spec.mode == "translational":
            hist[:, 0] = 0.0
            hist[:, 1] = 0.0
        cols[0] = np.tile(hist, (1, spec.H)) if spec.H == 1 else cols[0]
    if spec.kind == "mlp_plus_formulated":
        twist = estimate_twist(ds.poses, idx)
        dt = float(np.median(np.diff(ds.poses.ticks[idx[0]:idx[0] + 10]))) / TICKS_PER_SECOND
        cols.append(formulated_feature_block(bins, twist, spec.robot, dt, spec.T, spec.K))
    X = np.concatenate(cols, axis=1)
    spec.norm_mean = X.mean(axis=0)
    spec.norm_var = X.var(axis=0)
    spec.__post_init__()
    return spec


# ---------------------------------------------------------------------------
# Checkpoints: versioned text header plus repr-exact parameter payload.
# ---------------------------------------------------------------------------

def _fmt_vec(vec):
    return ",".join(repr(float(v)) for v in vec)


def _parse_vec(raw):
    return np.array([float(v) for v in raw.split(",")], dtype=np.float64) if raw else np.empty(0)


def checkpoint_save(spec, path):
    buf = io.StringIO()
    buf.write(f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}\n")
    buf.write(f"kind={spec.kind}\n")
    buf.write(f"mode={spec.mode}\n")
    buf.write(f"H={spec.H}\n")
    buf.write(f"T={repr(float(spec.T))}\n")
    buf.write(f"K={spec.K}\n")
    buf.write(f"hidden={','.join(str(h) for h in spec.hidden)}\n")
    buf.write(f"robot={_fmt_vec(spec.robot.as_tuple())}\n")
    buf.write(f"n_params={spec.params.size}\n")
    buf.write(f"norm_mean={_fmt_vec(spec.norm_mean)}\n")
    buf.write(f"norm_var={_fmt_vec(spec.norm_var)}\n")
    buf.write(f"bn_stats={_fmt_vec(spec.bn_stats)}\n")
    for v in spec.params:
        buf.write(repr(float(v)) + "\n")
    data = buf.getvalue()
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(data)
    os.replace(tmp, path)


def checkpoint_load(path):
    if not os.path.exists(path):
        raise DataError(f"no checkpoint at {path}")
    with open(path) as fh:
        head = fh.readline().strip()
        if not head.startswith(CHECKPOINT_MAGIC):
            raise DataError(f"not a model checkpoint: {path}")
        if head != f"{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}":
            raise DataError(f"unsupported checkpoint version: {head!r}")
        fields = {}
        for _ in range(11):
            line = fh.readline().rstrip("\n")
            if "=" not in line:
                raise DataError(f"malformed checkpoint header line: {line!r}")
            key, raw = line.split("=", 1)
            fields[key] = raw
        required = ("kind", "mode", "H", "T", "K", "hidden", "robot",
                    "n_params", "norm_mean", "norm_var", "bn_stats")
        missing = [k for k in required if k not in fields]
        if missing:
            raise DataError(f"checkpoint header missing fields: {missing}")
        n_params = int(fields["n_params"])
        params = np.empty(n_params)
        for i in range(n_params):
            line = fh.readline()
            if not line:
                raise DataError(f"checkpoint truncated: expected {n_params} parameters, got {i}")
            params[i] = float(line)
        if fh.readline():
            raise DataError("checkpoint has trailing data after the parameter payload")
    hidden = tuple(int(h) for h in fields["hidden"].split(",")) if fields["hidden"] else ()
    try:
        spec = ModelSpec(kind=fields["kind"], H=int(fields["H"]), T=float(fields["T"]),
                         K=int(fields["K"]), mode=fields["mode"], hidden=hidden,
                         robot=RobotParams.from_tuple(_parse_vec(fields["robot"])),
                         params=params, bn_stats=_parse_vec(fields["bn_stats"]),
                         norm_mean=_parse_vec(fields["norm_mean"]),
                         norm_var=_parse_vec(fields["norm_var"]))
    except (ValueError, TypeError) as exc:
        raise DataError(f"malformed checkpoint header: {exc}") from None
    return spec
