"""
Toy enhancement from end to end
===============================

Simulate the toy reverberant corpus, train a bridge model and a predictive
baseline, enhance the held-out items with 5 and 10 ODE steps, and print the
evaluation table.  Uses configs/toy_acceptance.cfg; takes roughly 20 minutes
on one CPU core.  Pass a directory to keep the outputs (default: a temp dir).
"""

import sys
import tempfile
from pathlib import Path

from sbse.cli import main as sbse
from sbse.datasim import read_manifest, write_manifest

cfg = ["--config", str(Path(__file__).resolve().parent.parent / "configs" / "toy_acceptance.cfg")]
root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="sbse_toy_"))

sbse(["simulate", "--toy", "--out", str(root / "data")] + cfg)
items = read_manifest(root / "data" / "manifest.jsonl")
write_manifest(root / "data" / "train.jsonl", items[:200])
write_manifest(root / "data" / "test.jsonl", items[200:])
train_m, test_m = str(root / "data" / "train.jsonl"), str(root / "data" / "test.jsonl")

sbse(["train", "--manifest", train_m, "--out", str(root / "bridge")] + cfg)
sbse(["train", "--manifest", train_m, "--mode", "predictive", "--max-steps", "2000",
      "--out", str(root / "predictive")] + cfg)

for steps in (5, 10):
    sbse(["enhance", "--checkpoint", str(root / "bridge" / "last.ckpt"), "--manifest", test_m,
          "--sampler", "ode", "--steps", str(steps), "--out", str(root / f"bridge_{steps}")] + cfg)
sbse(["enhance", "--checkpoint", str(root / "predictive" / "last.ckpt"), "--manifest", test_m,
      "--out", str(root / "predictive_out")] + cfg)

# Prints the per-system table; the CSV with per-item rows is in report/.
sbse(["evaluate", "--ref-manifest", test_m, "--audio", "unprocessed=noisy",
      "--audio", f"predictive={root / 'predictive_out'}",
      "--audio", f"bridge_5={root / 'bridge_5'}", "--audio", f"bridge_10={root / 'bridge_10'}",
      "--out", str(root / "report")] + cfg)
print("outputs in", root)
