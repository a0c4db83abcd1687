"""Calibration job E: transform ordering (c7) and Chamfer convergence (c9)."""
import os
import time

from wheeldyn.core import load_dataset, split_dataset
from wheeldyn.analytical import RobotParams
from wheeldyn.losses import LossConfig
from wheeldyn.models import make_spec, compute_norm_stats
from wheeldyn.training import TrainConfig, progressive_train, train_stage
from wheeldyn.evaluation import rmse_by_length

OUT = "/root/pkg/__cal"
train_ds = load_dataset(os.path.join(OUT, "train"))
test_ds = load_dataset(os.path.join(OUT, "test"))
split = split_dataset(train_ds, test_fraction=0.2, seed=0, block_s=120.0)

print("=== c7: LR transform ordering at length 64 ===", flush=True)
for seed in range(4):
    t0 = time.time()
    vals = {}
    for mode in ("ego", "translational", "none"):
        spec = make_spec("lr", mode=mode, robot=RobotParams(), seed=seed)
        compute_norm_stats(spec, split.train)
        progressive_train(spec, split.train, split.test, 64, TrainConfig(seed=seed))
        vals[mode] = rmse_by_length(spec, test_ds, lengths=(64,), max_segments=64).rmse_mm[0]
    ok = vals["ego"] < vals["translational"] < vals["none"]
    print(f"seed={seed}: ego={vals['ego']:.2f} tr={vals['translational']:.2f} "
          f"none={vals['none']:.2f} ordered={ok} {time.time()-t0:.1f}s", flush=True)

print("=== c9: Chamfer vs MSE at length 64 ===", flush=True)
for seed in range(4):
    t0 = time.time()
    traces = {}
    for kind in ("MSE", "Chamfer"):
        spec = make_spec("lr", robot=RobotParams(), seed=seed)
        compute_norm_stats(spec, split.train)
        cfg = TrainConfig(loss=LossConfig(kind=kind, alpha=0.5), seed=seed,
                          max_updates_per_stage=2000, patience=10**6,
                          updates_per_eval=50)
        rec = train_stage(spec, split.train, split.test, 64, cfg)
        traces[kind] = rec["trace"]
    mse_final = traces["MSE"][-1]["val"]
    hit = None
    for pt in traces["Chamfer"]:
        if pt["val"] <= mse_final:
            hit = pt["updates"]
            break
    mse_hit = None
    for pt in traces["MSE"]:
        if pt["val"] <= mse_final:
            mse_hit = pt["updates"]
            break
    print(f"seed={seed}: mse@2000={mse_final:.6g} chamfer reaches at {hit} "
          f"(mse itself at {mse_hit}) {time.time()-t0:.1f}s", flush=True)
