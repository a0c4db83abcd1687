"""Calibration job B: pure MLP progressive + length-1-only, vs saved hybrid."""
import os
import time

from wheeldyn.core import load_dataset, split_dataset
from wheeldyn.analytical import RobotParams
from wheeldyn.models import make_spec, compute_norm_stats, checkpoint_load, checkpoint_save
from wheeldyn.training import TrainConfig, progressive_train, train_stage
from wheeldyn.evaluation import rmse_by_length

OUT = "/root/pkg/__cal"
train_ds = load_dataset(os.path.join(OUT, "train"))
test_ds = load_dataset(os.path.join(OUT, "test"))
split = split_dataset(train_ds, test_fraction=0.2, seed=0, block_s=120.0)
lengths = (1, 8, 64, 512, 4096)

t0 = time.time()
mlp = make_spec("mlp", robot=RobotParams(), seed=0)
compute_norm_stats(mlp, split.train)
recs = progressive_train(mlp, split.train, split.test, 4096, TrainConfig())
for r in recs:
    print(f"stage L={r['length']:>5}: updates={r['updates']:>4} best_val={r['best_val']:.6e} "
          f"batch={r['batch']} {r['seconds']:.1f}s", flush=True)
print(f"mlp progressive total {time.time()-t0:.1f}s", flush=True)
checkpoint_save(mlp, os.path.join(OUT, "mlp_prog.ckpt"))
rep_m = rmse_by_length(mlp, test_ds, lengths=lengths, max_segments=48)
print("mlp prog   :", {l: round(r, 3) for l, r in zip(rep_m.lengths, rep_m.rmse_mm)}, flush=True)

t0 = time.time()
short = make_spec("mlp", robot=RobotParams(), seed=0)
compute_norm_stats(short, split.train)
rec = train_stage(short, split.train, split.test, 1, TrainConfig())
print(f"len-1 only: updates={rec['updates']} best_val={rec['best_val']:.6e} {time.time()-t0:.1f}s", flush=True)
rep_s = rmse_by_length(short, test_ds, lengths=lengths, max_segments=48)
print("mlp len1   :", {l: round(r, 3) for l, r in zip(rep_s.lengths, rep_s.rmse_mm)}, flush=True)

hyb = checkpoint_load(os.path.join(OUT, "hybrid.ckpt"))
rep_h = rmse_by_length(hyb, test_ds, lengths=lengths, max_segments=48)
i512, i4096 = lengths.index(512), lengths.index(4096)
print(f"c6(ii) hybrid<mlp @512: {rep_h.rmse_mm[i512]:.2f} < {rep_m.rmse_mm[i512]:.2f}", flush=True)
print(f"c6(ii) hybrid<mlp @4096: {rep_h.rmse_mm[i4096]:.2f} < {rep_m.rmse_mm[i4096]:.2f}", flush=True)
print(f"c8 len1/prog @512: {rep_s.rmse_mm[i512]/rep_m.rmse_mm[i512]:.2f} (need >= 2)", flush=True)
