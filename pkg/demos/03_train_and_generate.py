"""A short training run, its FID curve, and generated images.

Builds a small synthetic corpus, trains with the default objective (hinge
loss, cyclical rates, spectral norm on the generator, two D steps per G
step) and writes a contact sheet of test sketches next to their outputs.
The defaults finish in well under a minute; raise --steps and --size for a run
that actually learns the garments.

    python demos/03_train_and_generate.py --steps 300 --size 32
"""

import argparse
import time
from pathlib import Path

from sketchloom.cli import main as cli
from sketchloom.config import ConfigFile, apply_overrides

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--out", default="demo_out/train")
parser.add_argument("--steps", type=int, default=300)
parser.add_argument("--size", type=int, choices=[32, 64], default=32)
parser.add_argument("--pairs", type=int, default=40)
args = parser.parse_args()
out = Path(args.out)

# %% Data
cli(["prepare", "--synthetic", str(args.pairs), "--size", str(args.size), "--out", str(out / "data")])

# %% Config
# 32-pixel runs use a 5-level U-Net with narrow layers; 64 pixels is the
# full default model.
cfg = ConfigFile()
overrides = {"train.total_g_steps": args.steps, "train.eval_every": max(1, args.steps // 3)}
if args.size == 32:
    overrides.update({"augment.resize_to": 36, "augment.crop_to": 32, "model.image_size": 32,
                      "model.g_base_width": 8, "model.g_depth": 5, "model.d_base_width": 8, "model.d_depth": 2})
cfg = apply_overrides(cfg, overrides)
cfg_path = out / "config.json"
cfg_path.parent.mkdir(parents=True, exist_ok=True)
cfg_path.write_text(cfg.dumps())

# %% Train
t0 = time.perf_counter()
cli(["train", "--config", str(cfg_path), "--manifest", str(out / "data" / "manifest.json"), "--out", str(out / "run")])
print(f"trained {args.steps} G steps in {time.perf_counter() - t0:.1f}s")
last = (out / "run" / "metrics.csv").read_text().splitlines()[-1].split(",")
print(f"last row: d_loss {float(last[1]):.3f}  g_adv {float(last[2]):.3f}  g_l1 {float(last[3]):.3f}")

# %% Generate
ckpts = sorted((out / "run").glob("ckpt_*.sklm"))
sketches = sorted(str(p) for p in (out / "data" / "sketches").glob("*.png"))[:6]
cli(["generate", "--checkpoint", str(ckpts[-1]), "--sketch", *sketches, "--out", str(out / "generated")])
print(f"contact sheet: {out / 'generated' / 'contact_sheet.png'}")
