"""Calibration job C: widen the len-1 vs progressive MLP margin at length 512."""
import os
import time

from wheeldyn.core import load_dataset, split_dataset
from wheeldyn.analytical import RobotParams
from wheeldyn.models import make_spec, compute_norm_stats, checkpoint_load
from wheeldyn.training import TrainConfig, train_stage
from wheeldyn.evaluation import rmse_by_length

OUT = "/root/pkg/__cal"
train_ds = load_dataset(os.path.join(OUT, "train"))
test_ds = load_dataset(os.path.join(OUT, "test"))
split = split_dataset(train_ds, test_fraction=0.2, seed=0, block_s=120.0)

prog = checkpoint_load(os.path.join(OUT, "mlp_prog.ckpt"))
rep_p = rmse_by_length(prog, test_ds, lengths=(512,), max_segments=48)
p512 = rep_p.rmse_mm[0]
print(f"prog @512: {p512:.2f} mm", flush=True)

for seed in (0, 1):
    for budget in (192, 384, 768):
        t0 = time.time()
        short = make_spec("mlp", robot=RobotParams(), seed=seed)
        compute_norm_stats(short, split.train)
        cfg = TrainConfig(max_updates_per_stage=budget, patience=96, seed=seed)
        rec = train_stage(short, split.train, split.test, 1, cfg)
        rep_s = rmse_by_length(short, test_ds, lengths=(512,), max_segments=48)
        s512 = rep_s.rmse_mm[0]
        print(f"seed={seed} budget={budget:>4}: updates={rec['updates']:>4} "
              f"len1@512={s512:.2f} ratio={s512 / p512:.3f} {time.time()-t0:.1f}s", flush=True)
