"""Calibration job D: c8 ratio sensitivity to eval segment count."""
import os

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
short = make_spec("mlp", robot=RobotParams(), seed=0)
compute_norm_stats(short, split.train)
train_stage(short, split.train, split.test, 1, TrainConfig())

for segs in (32, 48, 64, 96, 128):
    p = rmse_by_length(prog, test_ds, lengths=(512,), max_segments=segs).rmse_mm[0]
    s = rmse_by_length(short, test_ds, lengths=(512,), max_segments=segs).rmse_mm[0]
    print(f"segs={segs:>3}: prog={p:8.2f} len1={s:8.2f} ratio={s / p:.3f}", flush=True)
