"""From garment photo to augmented training pair.

Walks one synthetic garment through sketch synthesis and the paired
augmentation pipeline, writing a strip of intermediate images.

    python demos/01_sketch_pipeline.py --out demo_out/pipeline
"""

import argparse
from pathlib import Path

import numpy as np

from sketchloom.augment import AugmentParams, augment_pair
from sketchloom.dataset import average_hash, hamming, sketchify, synthetic_garment
from sketchloom.image import gray_to_rgb, save_image
from sketchloom.rng import SplitMix64

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--out", default="demo_out/pipeline")
parser.add_argument("--size", type=int, default=128)
args = parser.parse_args()
out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)

# %% A garment and its pencil sketch
# The sketch is grayscale / (1 - blurred inverse): flat areas wash out to
# white and only outlines and print edges stay dark.
photo = synthetic_garment(args.size, SplitMix64.from_key(3, "garment", 0))
sketch = sketchify(photo)
print(f"photo {photo.shape}, sketch {sketch.shape}")
print(f"sketch pixels brighter than 0.95: {np.mean(sketch > 0.95):.1%}")

# %% Near-duplicate detection
# A 64-bit average hash summarises the coarse layout. Two different garments
# share the white-background silhouette, so their hashes are close too; the
# tests use textured blocks when they need clearly distinct images.
other = synthetic_garment(args.size, SplitMix64.from_key(3, "garment", 1))
shifted = np.clip(photo + 0.03, 0, 1)
print(f"hash distance, same garment brightened: {hamming(average_hash(photo), average_hash(shifted))}")
print(f"hash distance, another garment:         {hamming(average_hash(photo), average_hash(other))}")

# %% Paired augmentation
# Resize up, random crop, flip and rotate use one draw for both images; salt
# and pepper noise lands on the sketch only.
crop = args.size - args.size // 8
params = AugmentParams(resize_to=args.size + args.size // 8, crop_to=crop)
quiet = AugmentParams(resize_to=params.resize_to, crop_to=crop, salt_pepper_fraction=0.0)
tiles = [np.concatenate([gray_to_rgb(sketch)[:crop, :crop], photo[:crop, :crop]], axis=0)]
for seed in range(4):
    a_sk, a_ph = augment_pair(sketch, photo, params, SplitMix64.from_key(0, "demo", seed))
    tiles.append(np.concatenate([gray_to_rgb(a_sk), a_ph], axis=0))
    q_sk, q_ph = augment_pair(sketch, photo, quiet, SplitMix64.from_key(0, "demo", seed))
    print(f"seed {seed}: noise changed {np.mean(a_sk != q_sk):.2%} of sketch pixels, "
          f"photo identical to noise-free draw: {np.array_equal(a_ph, q_ph)}")

gap = np.ones((2 * crop, 2, 3))
strip = np.concatenate([t for tile in tiles for t in (tile, gap)][:-1], axis=1)
save_image(strip, out / "pipeline_strip.png")
print(f"wrote {out / 'pipeline_strip.png'} (top: sketches, bottom: photos; first column un-augmented)")
