"""Calibration job J: c9 on a slip-noisy set (A) and normalized grads (C)."""
import os
import time

from wheeldyn.analytical import RobotParams
from wheeldyn.core import load_dataset, split_dataset
from wheeldyn.datagen import OracleConfig, collect
from wheeldyn.losses import LossConfig
from wheeldyn.models import make_spec, compute_norm_stats
from wheeldyn.training import TrainConfig, train_stage

HIDDEN = RobotParams(tau_s=0.15, tau_w=0.15, slip_gain_s=0.9, slip_gain_w=1.1,
                     cmd_latency=0.04)


def run(split, kind, seed, **over):
    spec = make_spec("mlp", robot=RobotParams(), seed=seed)
    compute_norm_stats(spec, split.train)
    cfg = TrainConfig(loss=LossConfig(kind=kind, alpha=0.5), seed=seed,
                      max_updates_per_stage=2000, patience=10**6,
                      updates_per_eval=50, **over)
    return train_stage(spec, split.train, split.train, 64, cfg)["trace"]


def pair(split, seed, tag, **over):
    t0 = time.time()
    target = run(split, "MSE", seed, **over)[-1]["val"]
    trace = run(split, "Chamfer", seed, **over)
    hit = next((p["updates"] for p in trace if p["val"] <= target), None)
    print(f"{tag} seed={seed}: mse@2000={target:.6g} chamfer hits at {hit} "
          f"({time.time()-t0:.1f}s)", flush=True)
    pts = {p["updates"]: round(p["val"], 4) for p in trace
           if p["updates"] in (250, 500, 1000, 1500, 2000)}
    print(f"  chamfer: {pts}", flush=True)


print("=== A: slip-noisy dataset, default config ===", flush=True)
noisy = collect(OracleConfig(true_params=HIDDEN, slip_noise_std=0.05,
                             pose_noise_std=0.001, seed=11), 2000.0)
split_n = split_dataset(noisy, test_fraction=0.2, seed=0, block_s=120.0)
for seed in range(4):
    pair(split_n, seed, "A")

print("=== C: clean set, normalized gradients, failing seeds ===", flush=True)
train_ds = load_dataset("/root/pkg/__cal/train")
split_c = split_dataset(train_ds, test_fraction=0.2, seed=0, block_s=120.0)
for seed in (0, 2):
    pair(split_c, seed, "C", grad_mode="normalized", lr=2e-3)
