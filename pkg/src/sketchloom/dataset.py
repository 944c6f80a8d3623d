"""Paired (sketch, photo) dataset preparation.

Turns a directory of cleaned garment photographs into sketch/photo pairs with
a JSON manifest and a seeded train/test split. :func:`generate_synthetic_corpus`
draws procedural dresses so the rest of the pipeline can run without any
real photographs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .image import (
    as_image,
    center_square,
    decode_image,
    encode_image,
    gaussian_blur,
    gray_to_rgb,
    quantize,
    resize_bilinear,
    to_grayscale,
)
from .png import PNGDecodeError
from .rng import SplitMix64

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


class DatasetTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class SketchParams:
    blur_sigma: float = 10.0
    blur_radius: int = 21
    dodge_epsilon: float = 1e-6

    def __post_init__(self):
        if not self.blur_sigma > 0:
            raise ValueError("blur_sigma must be positive")
        if not self.dodge_epsilon > 0:
            raise ValueError("dodge_epsilon must be positive")
        if self.blur_radius < 1:
            raise ValueError("blur_radius must be >= 1")


@dataclass
class PairedSample:
    id: str
    sketch_path: str
    photo_path: str
    split: str
    content_hash: str


@dataclass
class DatasetManifest:
    samples: list[PairedSample]
    seed: int
    split_ratio: float
    version: int = MANIFEST_VERSION
    metadata: dict = field(default_factory=dict)
    root: Path | None = None

    def split(self, name: str) -> list[PairedSample]:
        return [s for s in self.samples if s.split == name]

    @property
    def train(self) -> list[PairedSample]:
        return self.split("train")

    @property
    def test(self) -> list[PairedSample]:
        return self.split("test")

    def resolve(self, rel: str) -> Path:
        return (self.root or Path(".")) / rel

    def to_json(self) -> dict:
        doc = {
            "version": self.version,
            "seed": self.seed,
            "split_ratio": self.split_ratio,
            "samples": [asdict(s) for s in self.samples],
        }
        if self.metadata:
            doc["metadata"] = self.metadata
        return doc

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        self.root = path.parent
        return path

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        doc = json.loads(path.read_text())
        if doc.get("version") != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {doc.get('version')!r}")
        samples = [PairedSample(**s) for s in doc["samples"]]
        return cls(
            samples=samples,
            seed=int(doc["seed"]),
            split_ratio=float(doc["split_ratio"]),
            metadata=doc.get("metadata", {}),
            root=path.parent,
        )

    def load_pair(self, sample: PairedSample) -> tuple[np.ndarray, np.ndarray]:
        sketch = to_grayscale(decode_image(self.resolve(sample.sketch_path).read_bytes()))
        photo = gray_to_rgb(decode_image(self.resolve(sample.photo_path).read_bytes()))
        return sketch, photo


# ---------------------------------------------------------------- hashing


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _area_downsample(gray: np.ndarray, size: int) -> np.ndarray:
    h, w = gray.shape
    ys = np.linspace(0, h, size + 1)
    xs = np.linspace(0, w, size + 1)
    out = np.empty((size, size))
    for i in range(size):
        y0, y1 = int(ys[i]), max(int(math.ceil(ys[i + 1])), int(ys[i]) + 1)
        for j in range(size):
            x0, x1 = int(xs[j]), max(int(math.ceil(xs[j + 1])), int(xs[j]) + 1)
            out[i, j] = gray[y0:y1, x0:x1].mean()
    return out


def average_hash(img: np.ndarray) -> int:
    """64-bit average hash: 8x8 grayscale block means thresholded at their mean."""
    small = _area_downsample(to_grayscale(img)[:, :, 0], 8)
    bits = (small > small.mean()).ravel()
    return int(sum(1 << i for i, b in enumerate(bits) if b))


def hamming(a: int, b: int) -> int:
    return bin(a ^ b).count("1")


def dedup(entries: list[tuple[str, str, int]], threshold: int = 5) -> list[tuple[str, str, int]]:
    """Drop exact and near duplicates, keeping the lexicographically-first path.

    ``entries`` are ``(path, content_hash, perceptual_hash)``; the retained
    entries come back in their input order.
    """
    kept_hashes: set[str] = set()
    kept_phash: list[int] = []
    keep: set[str] = set()
    for path, chash, phash in sorted(entries, key=lambda e: e[0]):
        if chash in kept_hashes:
            continue
        if any(hamming(phash, other) <= threshold for other in kept_phash):
            continue
        kept_hashes.add(chash)
        kept_phash.append(phash)
        keep.add(path)
    return [e for e in entries if e[0] in keep]


# ---------------------------------------------------------------- sketches


def sketchify(photo: np.ndarray, params: SketchParams = SketchParams()) -> np.ndarray:
    """Pencil sketch: grayscale, invert, blur, then color-dodge over the grayscale."""
    g = to_grayscale(as_image(photo, "photo"))
    blurred = gaussian_blur(1.0 - g, params.blur_sigma, params.blur_radius)
    out = g / (1.0 - blurred + params.dodge_epsilon)
    return np.minimum(out, 1.0)


def validate_background(photo: np.ndarray, border_band: int = 4, min_white_fraction: float = 0.9) -> dict:
    photo = as_image(photo, "photo")
    h, w = photo.shape[:2]
    if not 0 < border_band < min(h, w) / 2:
        raise ValueError(f"border_band {border_band} invalid for {h}x{w} image")
    lum = to_grayscale(photo)[:, :, 0]
    mask = np.ones((h, w), dtype=bool)
    mask[border_band : h - border_band, border_band : w - border_band] = False
    frac = float(np.mean(lum[mask] >= 0.95))
    return {
        "white_fraction": frac,
        "border_band": border_band,
        "min_white_fraction": min_white_fraction,
        "passed": frac >= min_white_fraction,
    }


def train_count(n: int, split_ratio: float) -> int:
    # round half up
    return int(math.floor(split_ratio * n + 0.5))


def _assign_splits(ids: list[str], split_ratio: float, seed: int) -> dict[str, str]:
    order = SplitMix64.from_key(seed, "split").permutation(len(ids))
    n_train = train_count(len(ids), split_ratio)
    return {ids[j]: ("train" if rank < n_train else "test") for rank, j in enumerate(order)}


def _write_pair(photo: np.ndarray, photo_rel: str, sketch_rel: str, root: Path, params: SketchParams) -> str:
    photo_bytes = encode_image(photo)
    (root / photo_rel).write_bytes(photo_bytes)
    # sketch comes from the quantized photo, i.e. exactly what decode(photo file) yields
    sketch = sketchify(quantize(photo), params)
    (root / sketch_rel).write_bytes(encode_image(sketch))
    return content_hash(photo_bytes)


def build_manifest(
    photo_dir: str | Path,
    split_ratio: float = 0.8,
    seed: int = 0,
    params: SketchParams = SketchParams(),
    out_dir: str | Path | None = None,
    size: int | None = None,
    near_dup_threshold: int = 5,
    border_band: int = 4,
    min_white_fraction: float = 0.9,
) -> DatasetManifest:
    """Build a paired dataset from a directory of PNG photographs.

    Photos are decoded, deduplicated, optionally center-cropped and resized to
    ``size``, sketchified, and written (with their sketches) under ``out_dir``.
    """
    photo_dir = Path(photo_dir)
    if not photo_dir.is_dir():
        raise FileNotFoundError(f"photo directory not found: {photo_dir}")
    out = Path(out_dir) if out_dir is not None else photo_dir.parent / (photo_dir.name + "_paired")
    (out / "photos").mkdir(parents=True, exist_ok=True)
    (out / "sketches").mkdir(parents=True, exist_ok=True)

    skipped = []
    decoded: dict[str, np.ndarray] = {}
    entries = []
    for path in sorted(photo_dir.glob("*.png")):
        data = path.read_bytes()
        try:
            img = decode_image(data)
        except PNGDecodeError as exc:
            log.warning("skipping %s: %s", path.name, exc)
            skipped.append({"file": path.name, "reason": str(exc)})
            continue
        decoded[path.name] = img
        entries.append((path.name, content_hash(data), average_hash(img)))
    if len(entries) < 2:
        raise DatasetTooSmallError(f"{photo_dir} holds {len(entries)} decodable photos; need at least 2")

    retained = dedup(entries, near_dup_threshold)
    duplicates = sorted({e[0] for e in entries} - {e[0] for e in retained})
    if len(retained) < 2:
        raise DatasetTooSmallError("fewer than 2 photos remain after duplicate removal")

    ids = [Path(name).stem for name, _, _ in retained]
    splits = _assign_splits(ids, split_ratio, seed)
    samples = []
    background = {}
    for (name, _, _), sid in zip(retained, ids):
        photo = gray_to_rgb(decoded[name])
        if size is not None:
            photo = resize_bilinear(center_square(photo), size, size)
        report = validate_background(photo, border_band, min_white_fraction) if min(photo.shape[:2]) > 2 * border_band else None
        if report is not None and not report["passed"]:
            background[sid] = report["white_fraction"]
        photo_rel, sketch_rel = f"photos/{sid}.png", f"sketches/{sid}.png"
        chash = _write_pair(photo, photo_rel, sketch_rel, out, params)
        samples.append(PairedSample(sid, sketch_rel, photo_rel, splits[sid], chash))

    manifest = DatasetManifest(
        samples=samples,
        seed=seed,
        split_ratio=split_ratio,
        metadata={
            "sketch_params": asdict(params),
            "skipped": skipped,
            "duplicates_removed": duplicates,
            "background_warnings": background,
        },
    )
    manifest.save(out / MANIFEST_NAME)
    return manifest


# ---------------------------------------------------------------- synthetic corpus

_PALETTE = np.array(
    [
        [0.10, 0.16, 0.45],  # indigo
        [0.55, 0.12, 0.10],  # brick red
        [0.62, 0.40, 0.12],  # ochre
        [0.12, 0.35, 0.22],  # green
        [0.30, 0.10, 0.35],  # plum
        [0.85, 0.78, 0.55],  # cream
        [0.15, 0.15, 0.15],  # charcoal
        [0.75, 0.55, 0.20],  # mustard
    ]
)


def _points_in_polygon(xs: np.ndarray, ys: np.ndarray, poly: np.ndarray) -> np.ndarray:
    # even-odd crossing test
    inside = np.zeros(xs.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > ys) != (y2 > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (ys - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (xs < xint)
    return inside


def _dress_polygon(size: int, rng: SplitMix64) -> np.ndarray:
    margin = 0.12 * size
    cx = size / 2.0
    top = margin + rng.uniform_range(0.0, 0.08) * size
    hem = size - margin - rng.uniform_range(0.0, 0.06) * size
    shoulder = rng.uniform_range(0.14, 0.22) * size
    neck = rng.uniform_range(0.05, 0.09) * size
    waist_y = top + rng.uniform_range(0.28, 0.42) * (hem - top)
    waist = rng.uniform_range(0.09, 0.15) * size
    flare = min(rng.uniform_range(0.24, 0.36) * size, cx - margin)
    sleeve = rng.uniform_range(0.05, 0.12) * size
    pts = [
        (cx - neck, top),
        (cx - shoulder, top + 0.02 * size),
        (cx - shoulder - 0.04 * size, top + sleeve),
        (cx - shoulder + 0.02 * size, top + sleeve + 0.03 * size),
        (cx - waist, waist_y),
        (cx - flare, hem),
        (cx + flare, hem),
        (cx + waist, waist_y),
        (cx + shoulder - 0.02 * size, top + sleeve + 0.03 * size),
        (cx + shoulder + 0.04 * size, top + sleeve),
        (cx + shoulder, top + 0.02 * size),
        (cx + neck, top),
        (cx, top + neck),
    ]
    poly = np.array(pts)
    return np.clip(poly, margin * 0.5, size - margin * 0.5)


def _print_pattern(size: int, rng: SplitMix64) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    kind = rng.integer(0, 2)
    period = rng.uniform_range(0.08, 0.18) * size
    phase = rng.uniform_range(0.0, period)
    if kind == 0:  # dots
        gy = (ys + phase) % period - period / 2
        gx = (xs + phase) % period - period / 2
        return np.hypot(gx, gy) < period * rng.uniform_range(0.2, 0.35)
    if kind == 1:  # stripes at a random angle
        theta = rng.uniform_range(0.0, np.pi)
        t = xs * np.cos(theta) + ys * np.sin(theta) + phase
        return (t % period) < period * rng.uniform_range(0.3, 0.6)
    # diamonds
    gy = np.abs((ys + phase) % period - period / 2)
    gx = np.abs((xs + phase) % period - period / 2)
    return gx + gy < period * rng.uniform_range(0.2, 0.4)


def synthetic_garment(size: int, rng: SplitMix64) -> np.ndarray:
    """One procedural dress on a white background."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    poly = _dress_polygon(size, rng)
    silhouette = _points_in_polygon(xs, ys, poly)
    i = rng.integer(0, len(_PALETTE) - 1)
    j = (i + rng.integer(1, len(_PALETTE) - 1)) % len(_PALETTE)
    motif = _print_pattern(size, rng)
    fabric = np.where(motif[:, :, None], _PALETTE[j], _PALETTE[i])
    img = np.ones((size, size, 3))
    img[silhouette] = fabric[silhouette]
    return img


def generate_synthetic_corpus(
    n: int,
    size: int,
    seed: int,
    out_dir: str | Path,
    split_ratio: float = 0.8,
    params: SketchParams = SketchParams(),
) -> DatasetManifest:
    if n < 2:
        raise DatasetTooSmallError("synthetic corpus needs n >= 2")
    if size < 32:
        raise ValueError("synthetic corpus needs size >= 32")
    out = Path(out_dir)
    (out / "photos").mkdir(parents=True, exist_ok=True)
    (out / "sketches").mkdir(parents=True, exist_ok=True)
    ids = [f"syn{i:05d}" for i in range(n)]
    splits = _assign_splits(ids, split_ratio, seed)
    samples = []
    for i, sid in enumerate(ids):
        photo = synthetic_garment(size, SplitMix64.from_key(seed, "garment", i))
        photo_rel, sketch_rel = f"photos/{sid}.png", f"sketches/{sid}.png"
        chash = _write_pair(photo, photo_rel, sketch_rel, out, params)
        samples.append(PairedSample(sid, sketch_rel, photo_rel, splits[sid], chash))
    manifest = DatasetManifest(
        samples=samples,
        seed=seed,
        split_ratio=split_ratio,
        metadata={"synthetic": {"n": n, "size": size}, "sketch_params": asdict(params)},
    )
    manifest.save(out / MANIFEST_NAME)
    return manifest
