"""
Training curve on sinusoids in white noise
==========================================

Train a narrow bridge denoiser for 2000 steps on one-second sinusoids in
white noise, then write the per-step loss to docs/toy_training_curve.csv.
"""

import csv
from pathlib import Path

import numpy as np

from sbse.denoiser import ConvArch, ConvDenoiser
from sbse.trainer import TrainConfig, train

rng = np.random.default_rng(0)
tt = np.arange(16000) / 16000
pairs = []
for _ in range(64):
    clean = 0.5 * np.sin(2 * np.pi * rng.uniform(200, 2000) * tt + rng.uniform(0, 2 * np.pi))
    pairs.append((clean + 0.1 * rng.standard_normal(tt.size), clean))

model = ConvDenoiser(ConvArch(8, 4, 8), compute_dtype=np.float32, rng=np.random.default_rng(0))
cfg = TrainConfig(max_epochs=10_000, max_steps=2000, segment_frames=16, seed=0)
result = train(model, pairs, cfg)
losses = np.array([row[1] for row in result.log_rows])

out = Path(__file__).resolve().parent.parent / "docs" / "toy_training_curve.csv"
with open(out, "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["step", "loss"])
    for step, loss in enumerate(losses, 1):
        w.writerow([step, "%.6f" % loss])

start, end = losses[:100].mean(), losses[-100:].mean()
print("mean loss, first 100 steps %.4f, last 100 steps %.4f (%.0f%% lower)"
      % (start, end, 100 * (1 - end / start)))
print("curve written to", out)
