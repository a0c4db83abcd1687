"""Calibration job A: dataset generation + dynamical hybrid progressive run."""
import os
import time

import numpy as np

from wheeldyn.datagen import OracleConfig, collect
from wheeldyn.analytical import RobotParams
from wheeldyn.core import save_dataset, split_dataset
from wheeldyn.models import make_spec, compute_norm_stats, checkpoint_save
from wheeldyn.training import TrainConfig, progressive_train
from wheeldyn.evaluation import rmse_by_length

OUT = "/root/pkg/__cal"
os.makedirs(OUT, exist_ok=True)
hidden = RobotParams(tau_s=0.15, tau_w=0.15, slip_gain_s=0.9, slip_gain_w=1.1,
                     cmd_latency=0.04)

t0 = time.time()
train_ds = collect(OracleConfig(true_params=hidden, pose_noise_std=0.001, seed=11), 2000.0)
print(f"collect train 2000s: {time.time()-t0:.1f}s poses={len(train_ds.poses)} cmds={len(train_ds.cmd_t)}", flush=True)
t0 = time.time()
test_ds = collect(OracleConfig(true_params=hidden, pose_noise_std=0.001, seed=12), 600.0)
print(f"collect test 600s: {time.time()-t0:.1f}s poses={len(test_ds.poses)}", flush=True)
save_dataset(train_ds, os.path.join(OUT, "train"))
save_dataset(test_ds, os.path.join(OUT, "test"))

split = split_dataset(train_ds, test_fraction=0.2, seed=0, block_s=120.0)
lengths = (1, 8, 64, 512, 4096)

base = make_spec("param_only", robot=RobotParams(), seed=0)
rep0 = rmse_by_length(base, test_ds, lengths=lengths, max_segments=48)
print("baseline   :", {l: round(r, 3) for l, r in zip(rep0.lengths, rep0.rmse_mm)}, flush=True)

t0 = time.time()
sp = make_spec("formulated_plus_mlp", robot=RobotParams(), seed=0)
compute_norm_stats(sp, split.train)
recs = progressive_train(sp, split.train, split.test, 4096, TrainConfig())
for r in recs:
    print(f"stage L={r['length']:>5}: updates={r['updates']:>4} best_val={r['best_val']:.6e} "
          f"batch={r['batch']} {r['seconds']:.1f}s", flush=True)
print(f"hybrid train total {time.time()-t0:.1f}s", flush=True)
checkpoint_save(sp, os.path.join(OUT, "hybrid.ckpt"))
rep1 = rmse_by_length(sp, test_ds, lengths=lengths, max_segments=48)
print("dyn hybrid :", {l: round(r, 3) for l, r in zip(rep1.lengths, rep1.rmse_mm)}, flush=True)
for L in (512, 4096):
    i = rep0.lengths.index(L)
    print(f"ratio base/hybrid @ {L}: {rep0.rmse_mm[i]/rep1.rmse_mm[i]:.2f} (need >= 2)", flush=True)
