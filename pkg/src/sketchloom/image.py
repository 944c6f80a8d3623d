"""Pixel primitives on ``(H, W, C)`` float arrays with values in [0, 1].

An "image" throughout the package is a plain :class:`numpy.ndarray` of
shape ``(height, width, channels)`` with ``channels`` in ``{1, 3}``. The
[-1, 1] range used by the networks is handled in :mod:`sketchloom.nn`.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .png import decode_png, encode_png

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def as_image(arr, name: str = "image") -> np.ndarray:
    """Validate and return ``arr`` as a float64 image array."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"{name} must have shape (H, W, 1|3), got {np.shape(arr)}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"{name} has an empty dimension: {img.shape}")
    if not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return img


def decode_image(data: bytes) -> np.ndarray:
    """Decode PNG bytes; alpha is composited over white."""
    px = decode_png(data).astype(np.float64) / 255.0
    c = px.shape[2]
    if c == 2:
        gray, alpha = px[:, :, :1], px[:, :, 1:]
        return gray * alpha + (1.0 - alpha)
    if c == 4:
        rgb, alpha = px[:, :, :3], px[:, :, 3:]
        return rgb * alpha + (1.0 - alpha)
    return px


def encode_image(img: np.ndarray) -> bytes:
    img = as_image(img)
    return encode_png(np.round(img * 255.0).astype(np.uint8))


def load_image(path: str | Path) -> np.ndarray:
    return decode_image(Path(path).read_bytes())


def save_image(img: np.ndarray, path: str | Path) -> bytes:
    data = encode_image(img)
    Path(path).write_bytes(data)
    return data


def quantize(img: np.ndarray) -> np.ndarray:
    """What ``decode_image(encode_image(img))`` returns, without the round trip."""
    return np.round(np.asarray(img) * 255.0) / 255.0


def _axis_weights(n_in: int, n_out: int):
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers and edge clamping."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    y0, y1, fy = _axis_weights(h, out_h)
    x0, x1, fx = _axis_weights(w, out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    # lerp form: constant regions stay exactly constant
    rows = img[y0] + fy * (img[y1] - img[y0])
    out = rows[:, x0] + fx * (rows[:, x1] - rows[:, x0])
    return np.clip(out, 0.0, 1.0)


def crop(img: np.ndarray, top: int, left: int, h: int, w: int) -> np.ndarray:
    img = np.asarray(img)
    H, W = img.shape[:2]
    if top < 0 or left < 0 or h < 1 or w < 1 or top + h > H or left + w > W:
        raise ValueError(f"crop ({top}, {left}, {h}, {w}) outside {H}x{W} image")
    return img[top : top + h, left : left + w].copy()


def center_square(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    side = min(h, w)
    return crop(img, (h - side) // 2, (w - side) // 2, side, side)


def flip_horizontal(img: np.ndarray) -> np.ndarray:
    return np.asarray(img)[:, ::-1].copy()


def to_grayscale(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.shape[2] == 1:
        return img.copy()
    y = img[:, :, 0] * 0.299 + img[:, :, 1] * 0.587 + img[:, :, 2] * 0.114
    return np.clip(y, 0.0, 1.0)[:, :, None]


def gray_to_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    return np.repeat(img, 3, axis=2) if img.shape[2] == 1 else img.copy()


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    i = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(i**2) / (2.0 * sigma**2))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    """Separable Gaussian blur; borders replicate the edge pixels."""
    k = gaussian_kernel(sigma, radius)
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    padded = np.pad(img, ((radius, radius), (0, 0), (0, 0)), mode="edge")
    tmp = np.zeros_like(img)
    for j, kj in enumerate(k):
        tmp += kj * padded[j : j + h]
    padded = np.pad(tmp, ((0, 0), (radius, radius), (0, 0)), mode="edge")
    out = np.zeros_like(img)
    for j, kj in enumerate(k):
        out += kj * padded[:, j : j + w]
    return np.clip(out, 0.0, 1.0)
