"""Calibration job G: c9 lr sweep, baseline-favoring comparison."""
import os
import time

from wheeldyn.core import load_dataset, split_dataset
from wheeldyn.analytical import RobotParams
from wheeldyn.losses import LossConfig
from wheeldyn.models import make_spec, compute_norm_stats
from wheeldyn.training import TrainConfig, train_stage

OUT = "/root/pkg/__cal"
train_ds = load_dataset(os.path.join(OUT, "train"))
split = split_dataset(train_ds, test_fraction=0.2, seed=0, block_s=120.0)


def run(kind, lr, seed, updates=2000, batch=64):
    spec = make_spec("mlp", robot=RobotParams(), seed=seed)
    compute_norm_stats(spec, split.train)
    cfg = TrainConfig(loss=LossConfig(kind=kind, alpha=0.5), seed=seed, lr=lr,
                      batch_size=batch, max_updates_per_stage=updates,
                      patience=10**6, updates_per_eval=50)
    rec = train_stage(spec, split.train, split.train, 64, cfg)
    return rec["trace"]


for seed in (0, 1):
    finals = {}
    for lr in (5e-4, 1e-3, 2e-3, 4e-3):
        t0 = time.time()
        tr = run("MSE", lr, seed)
        finals[lr] = tr[-1]["val"]
        print(f"seed={seed} MSE lr={lr:g}: final={tr[-1]['val']:.4f} "
              f"mid={{1000: {next(p['val'] for p in tr if p['updates'] == 1000):.4f}}} "
              f"{time.time()-t0:.0f}s", flush=True)
    lr_star = min(finals, key=finals.get)
    t0 = time.time()
    trc = run("Chamfer", lr_star, seed)
    target = finals[lr_star]
    hit = next((p["updates"] for p in trc if p["val"] <= target), None)
    print(f"seed={seed}: lr*={lr_star:g} mse_final={target:.4f} "
          f"chamfer final={trc[-1]['val']:.4f} hits at {hit} {time.time()-t0:.0f}s",
          flush=True)
