"""Command-line interface: collect, train, eval, rollout, plot, compare.

Every subcommand writes a manifest next to its outputs recording the
resolved arguments, wall-clock time and package version, so runs can be
reproduced from the artifact alone. Config files are plain ``key=value``
lines whose keys match the long flag names; explicit flags win over config
entries, which win over built-in defaults.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time

import numpy as np

from . import __version__
from .analytical import RobotParams
from .core import load_dataset, save_dataset, split_dataset
from .datagen import OracleConfig, collect
from .errors import DataError, NumericError
from .evaluation import (DEFAULT_LENGTHS, compare_reports, load_report,
                         rmse_by_length, rollout, save_comparison, save_report)
from .losses import LossConfig
from .models import checkpoint_load, checkpoint_save, compute_norm_stats, make_spec
from .training import TrainConfig, param_search, progressive_train

KIND_NAMES = {"lr": "lr", "mlp": "mlp", "formulated+mlp": "formulated_plus_mlp",
              "mlp+formulated": "mlp_plus_formulated", "paramonly": "param_only"}
TRANSFORM_NAMES = {"egocentric": "ego", "translational": "translational",
                   "none": "none"}


def _positive_float(raw):
    v = float(raw)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {raw}")
    return v


def _lengths_list(raw):
    try:
        out = [int(v) for v in raw.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad length list {raw!r}")
    if not out or any(v < 1 for v in out):
        raise argparse.ArgumentTypeError("lengths must be positive integers")
    return out


def _write_manifest(out_dir, name, args, t0, outputs):
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    blob = "\n".join(f"{k}={v}" for k, v in resolved.items())
    digest = hashlib.sha256(blob.encode()).hexdigest()[:16]
    path = os.path.join(out_dir, "manifest.txt")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(f"command={name}\n")
        fh.write(f"version={__version__}\n")
        fh.write(f"argv={' '.join(sys.argv[1:])}\n")
        for k, v in resolved.items():
            fh.write(f"arg.{k}={v}\n")
        fh.write(f"config_hash={digest}\n")
        fh.write(f"wall_s={time.monotonic() - t0:.3f}\n")
        for o in outputs:
            fh.write(f"output={o}\n")
    os.replace(tmp, path)


def _load_config_file(path):
    if not os.path.exists(path):
        raise DataError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for row, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path} row {row}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _merge_config(parser, argv):
    """Re-parse with config-file entries inserted before the explicit flags."""
    args = parser.parse_args(argv)
    cfg_path = getattr(args, "config", None)
    if not cfg_path:
        return args
    entries = _load_config_file(cfg_path)
    entries.pop("config", None)
    synthetic = [argv[0]]
    for k, v in entries.items():
        flag = "--" + k.replace("_", "-")
        if v.lower() in ("true", "false", "yes", "no", "on", "off"):
            if v.lower() in ("true", "yes", "on"):
                synthetic.append(flag)
        else:
            synthetic.extend([flag, v])
    synthetic.extend(argv[1:])
    return parser.parse_args(synthetic)


def _prepare_out(path, force):
    if os.path.exists(path) and os.listdir(path) and not force:
        raise DataError(f"output {path} exists; pass --force to overwrite")
    os.makedirs(path, exist_ok=True)


def _robot_from_args(args):
    if getattr(args, "robot_ckpt", None):
        return checkpoint_load(args.robot_ckpt).robot
    return RobotParams()


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------

def cmd_collect(args):
    t0 = time.monotonic()
    _prepare_out(args.out, args.force)
    cfg = OracleConfig(
        true_params=_robot_from_args(args),
        slip_noise_std=args.slip_noise, pose_noise_std=args.pose_noise,
        safe_area=tuple(args.safe_area), s_max=args.s_max,
        omega_max=args.omega_max, stuck_timeout=args.stuck_timeout,
        seed=args.seed)
    ds = collect(cfg, args.duration)
    save_dataset(ds, args.out)
    _write_manifest(args.out, "collect", args, t0,
                    [os.path.join(args.out, f) for f in
                     ("poses.csv", "commands.csv", "latent.csv", "meta.txt")])
    print(f"collected {len(ds.poses)} poses, {len(ds.cmd_t)} commands -> {args.out}")
    return 0


def _loss_from_args(args):
    kind = {"mse": "MSE", "egomse": "EgoMSE", "chamfer": "Chamfer",
            "gapped": "GappedMSE"}[args.loss]
    return LossConfig(kind=kind, alpha=args.alpha, gap=args.gap,
                      theta_weight=args.theta_weight)


def cmd_train(args):
    t0 = time.monotonic()
    _prepare_out(args.out, args.force)
    ds = load_dataset(args.data)
    kind = KIND_NAMES[args.kind]
    mode = TRANSFORM_NAMES[args.transform]
    robot = _robot_from_args(args)
    ckpt_path = os.path.join(args.out, "model.ckpt")
    outputs = [ckpt_path]
    if kind == "param_only" and args.budget:
        result = param_search(ds, budget=args.budget, strategy=args.strategy,
                              seed=args.seed, length=args.search_length)
        spec = make_spec("param_only", mode=mode, robot=result.robot)
        checkpoint_save(spec, ckpt_path)
        hist_path = os.path.join(args.out, "search_history.csv")
        with open(hist_path, "w") as fh:
            names = sorted(result.history[0][1]) if result.history else []
            fh.write("eval," + ",".join(names) + ",value\n")
            for i, vals, v in result.history:
                fh.write(f"{i}," + ",".join(f"{vals[n]:.9f}" for n in names)
                         + f",{v:.9g}\n")
        outputs.append(hist_path)
        _write_manifest(args.out, "train", args, t0, outputs)
        print(f"search best loss {result.value:.6g} after {result.evals} evals "
              f"-> {ckpt_path}")
        return 0
    split = split_dataset(ds, test_fraction=args.val_fraction, seed=args.split_seed)
    spec = make_spec(kind, mode=mode, robot=robot, seed=args.seed)
    if kind != "param_only":
        compute_norm_stats(spec, split.train, seed=args.seed)
    tcfg = TrainConfig(lr=args.lr, batch_size=args.batch, l2=args.l2,
                       loss=_loss_from_args(args), grad_mode=args.grad_mode,
                       bptt_truncate=args.truncate, patience=args.patience,
                       updates_per_eval=args.updates_per_eval,
                       max_updates_per_stage=args.max_updates,
                       val_segments=args.val_segments, seed=args.seed)
    log = print if args.verbose else None
    records = progressive_train(spec, split.train, split.test, args.max_len,
                                tcfg, log=log)
    checkpoint_save(spec, ckpt_path)
    curve_path = os.path.join(args.out, "loss_curve.csv")
    with open(curve_path, "w") as fh:
        fh.write("step,length,split,loss\n")
        base = 0
        for rec in records:
            for row in rec["trace"]:
                step = base + row["updates"]
                if row["train"] is not None:
                    fh.write(f"{step},{rec['length']},train,{row['train']:.9g}\n")
                fh.write(f"{step},{rec['length']},val,{row['val']:.9g}\n")
            base += rec["updates"]
    outputs.append(curve_path)
    _write_manifest(args.out, "train", args, t0, outputs)
    final = records[-1]
    print(f"trained {args.kind} to length {final['length']} "
          f"(val {final['best_val']:.6g}) -> {ckpt_path}")
    return 0


def cmd_eval(args):
    t0 = time.monotonic()
    spec = checkpoint_load(args.ckpt)
    if args.transform:
        spec.mode = TRANSFORM_NAMES[args.transform]
    ds = load_dataset(args.data)
    report = rmse_by_length(spec, ds, lengths=args.lengths,
                            max_segments=args.max_segments)
    report.model_id = os.path.basename(args.ckpt)
    report.dataset_id = os.path.basename(os.path.normpath(args.data))
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    save_report(report, args.out)
    _write_manifest(os.path.dirname(os.path.abspath(args.out)), "eval", args,
                    t0, [args.out])
    for L, r, n in zip(report.lengths, report.rmse_mm, report.n_segments):
        print(f"length {L:>6}: {r:12.3f} mm over {n} segments")
    for note in report.notes:
        print(f"note: {note}")
    return 0


def cmd_rollout(args):
    t0 = time.monotonic()
    spec = checkpoint_load(args.ckpt)
    ds = load_dataset(args.data)
    traj = rollout(spec, ds, args.start, args.steps)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write("t,x,y,theta\n")
        for t, (x, y, th) in zip(traj.t, traj.xytheta):
            fh.write(f"{t:.9f},{x:.9f},{y:.9f},{th:.9f}\n")
    _write_manifest(os.path.dirname(os.path.abspath(args.out)), "rollout",
                    args, t0, [args.out])
    print(f"rolled {args.steps} steps from index {args.start} -> {args.out}")
    return 0


def cmd_plot(args):
    t0 = time.monotonic()
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    if args.what == "commands":
        if not args.data:
            raise DataError("plot --what commands needs --data")
        ds = load_dataset(args.data)
        with open(args.out, "w") as fh:
            fh.write("t,s_c,omega_c\n")
            for t, (s, w) in zip(ds.cmd_t, ds.cmd_vals):
                fh.write(f"{t:.9f},{s:.9f},{w:.9f}\n")
    elif args.what in ("traj", "deltas"):
        if not args.ckpt or not args.data:
            raise DataError(f"plot --what {args.what} needs --ckpt and --data")
        spec = checkpoint_load(args.ckpt)
        ds = load_dataset(args.data)
        traj = rollout(spec, ds, args.start, args.steps)
        truth = ds.poses.xytheta[args.start + 1:args.start + 1 + args.steps]
        with open(args.out, "w") as fh:
            if args.what == "traj":
                fh.write("t,x_true,y_true,x_pred,y_pred\n")
                for t, tr, pr in zip(traj.t, truth, traj.xytheta):
                    fh.write(f"{t:.9f},{tr[0]:.9f},{tr[1]:.9f},"
                             f"{pr[0]:.9f},{pr[1]:.9f}\n")
            else:
                fh.write("t,dx_true,dy_true,dtheta_true,"
                         "dx_pred,dy_pred,dtheta_pred\n")
                prev_t = ds.poses.xytheta[args.start]
                prev_p = prev_t
                for t, tr, pr in zip(traj.t, truth, traj.xytheta):
                    dt_r = tr - prev_t
                    dp = pr - prev_p
                    fh.write(f"{t:.9f},{dt_r[0]:.9f},{dt_r[1]:.9f},{dt_r[2]:.9f},"
                             f"{dp[0]:.9f},{dp[1]:.9f},{dp[2]:.9f}\n")
                    prev_t, prev_p = tr, pr
    else:  # losses
        if not args.train_dir:
            raise DataError("plot --what losses needs --train-dir")
        src = os.path.join(args.train_dir, "loss_curve.csv")
        if not os.path.exists(src):
            raise DataError(f"no loss curve at {src}")
        with open(src) as fh, open(args.out, "w") as out:
            header = fh.readline()
            if header.strip() != "step,length,split,loss":
                raise DataError(f"unrecognized loss curve header in {src}")
            out.write("step,loss\n")
            for line in fh:
                step, _length, split, loss = line.strip().split(",")
                if split == args.split:
                    out.write(f"{step},{loss}\n")
    _write_manifest(os.path.dirname(os.path.abspath(args.out)), "plot", args,
                    t0, [args.out])
    print(f"wrote {args.what} plot data -> {args.out}")
    return 0


def cmd_compare(args):
    t0 = time.monotonic()
    a = load_report(args.a)
    b = load_report(args.b)
    rows = compare_reports(a, b, name_a=args.name_a, name_b=args.name_b)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    save_comparison(rows, args.out, name_a=args.name_a, name_b=args.name_b)
    _write_manifest(os.path.dirname(os.path.abspath(args.out)), "compare",
                    args, t0, [args.out])
    for r in rows:
        print(f"length {r['length']:>6}: ratio {r['ratio']:.3f} "
              f"winner {r['winner']}")
    return 0


# ---------------------------------------------------------------------------
# Parser.
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true",
                   help="overwrite existing outputs")
    p.add_argument("--jobs", type=int, default=0,
                   help="worker cap hint (numba threading)")


def build_parser():
    parser = argparse.ArgumentParser(prog="wheeldyn",
                                     description="wheeled-robot dynamics: "
                                     "collect, train, evaluate")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("collect", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--duration", type=_positive_float, required=True,
                   help="seconds of data to generate")
    p.add_argument("--out", required=True)
    p.add_argument("--slip-noise", type=float, default=0.0)
    p.add_argument("--pose-noise", type=float, default=0.0)
    p.add_argument("--s-max", type=float, default=0.6)
    p.add_argument("--omega-max", type=float, default=1.2)
    p.add_argument("--stuck-timeout", type=float, default=10.0)
    p.add_argument("--safe-area", type=float, nargs=4,
                   default=(-2.0, -2.0, 2.0, 2.0),
                   metavar=("XMIN", "YMIN", "XMAX", "YMAX"))
    p.add_argument("--robot-ckpt", help="checkpoint supplying oracle params")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="train a model on a dataset")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=sorted(KIND_NAMES), required=True)
    p.add_argument("--transform", choices=sorted(TRANSFORM_NAMES),
                   default="egocentric")
    p.add_argument("--max-len", type=int, default=4096)
    p.add_argument("--loss", choices=("mse", "egomse", "chamfer", "gapped"),
                   default="mse")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--gap", type=int, default=1)
    p.add_argument("--theta-weight", type=float, default=None,
                   help="heading weight in the loss; default 1, chamfer 0")
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--batch", type=int, default=200)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--patience", type=int, default=32)
    p.add_argument("--truncate", type=int, default=64)
    p.add_argument("--grad-mode", choices=("raw", "normalized", "clipped"),
                   default="raw")
    p.add_argument("--updates-per-eval", type=int, default=4)
    p.add_argument("--max-updates", type=int, default=192)
    p.add_argument("--val-fraction", type=float, default=0.25)
    p.add_argument("--val-segments", type=int, default=64)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=0,
                   help="paramonly: parameter-search evaluation budget")
    p.add_argument("--strategy", choices=("random", "coordinate"),
                   default="coordinate")
    p.add_argument("--search-length", type=int, default=64)
    p.add_argument("--robot-ckpt", help="checkpoint supplying robot params")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="RMSE-by-length report")
    _add_common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lengths", type=_lengths_list, default=list(DEFAULT_LENGTHS))
    p.add_argument("--max-segments", type=int, default=256)
    p.add_argument("--transform", choices=sorted(TRANSFORM_NAMES))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rollout", help="roll a model out from one pose")
    _add_common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--start", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("plot", help="emit tidy CSVs for figure scripts")
    _add_common(p)
    p.add_argument("--what", choices=("traj", "deltas", "commands", "losses"),
                   required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data")
    p.add_argument("--ckpt")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--train-dir")
    p.add_argument("--split", choices=("train", "val"), default="val")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("compare", help="per-length winner table of two reports")
    _add_common(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name-a", default="a")
    p.add_argument("--name-b", default="b")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = _merge_config(parser, argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    if args.jobs:
        os.environ.setdefault("NUMBA_NUM_THREADS", str(args.jobs))
    try:
        return args.func(args)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
