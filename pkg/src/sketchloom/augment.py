"""Training-time augmentation for (sketch, photo) pairs.

Geometric draws (rotation angle, crop offset, flip) are made once per pair and
applied to both images; salt-and-pepper noise hits the sketch only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import crop, flip_horizontal, resize_bilinear
from .rng import SplitMix64


@dataclass(frozen=True)
class AugmentParams:
    resize_to: int = 286
    crop_to: int = 256
    flip_probability: float = 0.5
    max_rotation_deg: float = 15.0
    salt_pepper_fraction: float = 0.02
    fill_value: float = 1.0

    def __post_init__(self):
        if self.crop_to > self.resize_to:
            raise ValueError(f"crop_to {self.crop_to} exceeds resize_to {self.resize_to}")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError("flip_probability must lie in [0, 1]")
        if not 0.0 <= self.salt_pepper_fraction <= 1.0:
            raise ValueError("salt_pepper_fraction must lie in [0, 1]")
        if self.max_rotation_deg < 0:
            raise ValueError("max_rotation_deg must be >= 0")
        if not 0.0 <= self.fill_value <= 1.0:
            raise ValueError("fill_value must lie in [0, 1]")


def rotate(img: np.ndarray, angle: float, fill: float = 1.0) -> np.ndarray:
    """Rotate counter-clockwise about the image center with bilinear sampling.

    Samples falling outside the frame read ``fill``.
    """
    if not math.isfinite(angle):
        raise ValueError(f"rotation angle must be finite, got {angle}")
    img = np.asarray(img, dtype=np.float64)
    h, w, c = img.shape
    theta = math.radians(angle)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dy, dx = ys - cy, xs - cx
    # inverse map: output pixel -> source coordinate (image y axis points down)
    sx = cos_t * dx - sin_t * dy + cx
    sy = sin_t * dx + cos_t * dy + cy
    # snap round-off so exact mappings (0, 90, 180 degrees) hit pixel centers
    sx = np.where(np.abs(sx - np.round(sx)) < 1e-9, np.round(sx), sx)
    sy = np.where(np.abs(sy - np.round(sy)) < 1e-9, np.round(sy), sy)

    padded = np.full((h + 2, w + 2, c), float(fill))
    padded[1:-1, 1:-1] = img
    # shift by one so the fill border covers neighbours just outside the frame
    px, py = sx + 1.0, sy + 1.0
    outside = (px < 0) | (px > w + 1) | (py < 0) | (py > h + 1)
    px = np.clip(px, 0.0, w + 1.0)
    py = np.clip(py, 0.0, h + 1.0)
    x0 = np.minimum(np.floor(px).astype(np.intp), w)
    y0 = np.minimum(np.floor(py).astype(np.intp), h)
    fx = (px - x0)[:, :, None]
    fy = (py - y0)[:, :, None]
    # nested lerps keep constant regions exact
    top = padded[y0, x0] + fx * (padded[y0, x0 + 1] - padded[y0, x0])
    bottom = padded[y0 + 1, x0] + fx * (padded[y0 + 1, x0 + 1] - padded[y0 + 1, x0])
    out = top + fy * (bottom - top)
    out[outside] = fill
    return np.clip(out, 0.0, 1.0)


def salt_pepper(img: np.ndarray, fraction: float, rng: SplitMix64) -> np.ndarray:
    """Set each pixel (all channels) to 0 or 1 with probability ``fraction``."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    hit = rng.uniform((h, w)) < fraction
    value = rng.uniform((h, w)) < 0.5
    out = img.copy()
    out[hit] = np.where(value[hit], 1.0, 0.0)[:, None]
    return out


@dataclass(frozen=True)
class GeometricDraw:
    angle: float
    top: int
    left: int
    flip: bool


def draw_geometry(params: AugmentParams, rng: SplitMix64) -> GeometricDraw:
    angle = rng.uniform_range(-params.max_rotation_deg, params.max_rotation_deg)
    slack = params.resize_to - params.crop_to
    top = rng.integer(0, slack)
    left = rng.integer(0, slack)
    flip = rng.uniform() < params.flip_probability
    return GeometricDraw(angle, top, left, flip)


def apply_geometry(img: np.ndarray, draw: GeometricDraw, params: AugmentParams) -> np.ndarray:
    out = resize_bilinear(img, params.resize_to, params.resize_to)
    if draw.angle != 0.0:
        out = rotate(out, draw.angle, params.fill_value)
    out = crop(out, draw.top, draw.left, params.crop_to, params.crop_to)
    if draw.flip:
        out = flip_horizontal(out)
    return out


def augment_pair(
    sketch: np.ndarray, photo: np.ndarray, params: AugmentParams, rng: SplitMix64
) -> tuple[np.ndarray, np.ndarray]:
    """resize -> rotate -> crop -> flip on both images, then noise on the sketch."""
    if np.shape(sketch)[:2] != np.shape(photo)[:2]:
        raise ValueError(f"sketch {np.shape(sketch)} and photo {np.shape(photo)} differ in size")
    draw = draw_geometry(params, rng.spawn("geometry"))
    sketch_out = apply_geometry(sketch, draw, params)
    photo_out = apply_geometry(photo, draw, params)
    if params.salt_pepper_fraction > 0:
        sketch_out = salt_pepper(sketch_out, params.salt_pepper_fraction, rng.spawn("noise"))
    return sketch_out, photo_out
