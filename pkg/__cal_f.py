"""Calibration job F: c9 with the faithful protocol, MLP + train-set RMSE."""
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

for seed in range(4):
    t0 = time.time()
    traces = {}
    for kind in ("MSE", "Chamfer"):
        spec = make_spec("mlp", robot=RobotParams(), seed=seed)
        compute_norm_stats(spec, split.train)
        cfg = TrainConfig(loss=LossConfig(kind=kind, alpha=0.5), seed=seed,
                          max_updates_per_stage=2000, patience=10**6,
                          updates_per_eval=50)
        # track the common metric on the training trajectories themselves
        rec = train_stage(spec, split.train, split.train, 64, cfg)
        traces[kind] = rec["trace"]
    mse_final = traces["MSE"][-1]["val"]
    hit = None
    for pt in traces["Chamfer"]:
        if pt["val"] <= mse_final:
            hit = pt["updates"]
            break
    cur = {pt["updates"]: pt["val"] for pt in traces["Chamfer"]}
    mse_cur = {pt["updates"]: pt["val"] for pt in traces["MSE"]}
    pts = [0, 250, 500, 1000, 1500, 2000]
    print(f"seed={seed}: mse@2000={mse_final:.6g} chamfer hits at {hit} "
          f"({time.time()-t0:.1f}s)", flush=True)
    print("  mse     :", {u: round(mse_cur[u], 4) for u in pts if u in mse_cur}, flush=True)
    print("  chamfer :", {u: round(cur[u], 4) for u in pts if u in cur}, flush=True)
