"""Calibration job I: c9 at the MSE-favoring lr with spec-default Chamfer."""
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

LR = 2e-3
for seed in range(4):
    t0 = time.time()
    traces = {}
    for kind in ("MSE", "Chamfer"):
        spec = make_spec("mlp", robot=RobotParams(), seed=seed)
        compute_norm_stats(spec, split.train)
        cfg = TrainConfig(loss=LossConfig(kind=kind, alpha=0.5), seed=seed,
                          lr=LR, max_updates_per_stage=2000, patience=10**6,
                          updates_per_eval=50)
        rec = train_stage(spec, split.train, split.train, 64, cfg)
        traces[kind] = rec["trace"]
    target = traces["MSE"][-1]["val"]
    hit = next((p["updates"] for p in traces["Chamfer"] if p["val"] <= target),
               None)
    print(f"seed={seed}: mse@2000={target:.6g} chamfer hits at {hit} "
          f"({time.time()-t0:.1f}s)", flush=True)
    for kind in ("MSE", "Chamfer"):
        pts = {p["updates"]: round(p["val"], 4) for p in traces[kind]
               if p["updates"] in (250, 500, 1000, 1500, 2000)}
        print(f"  {kind:8s}: {pts}", flush=True)
