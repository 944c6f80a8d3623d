"""Feature extraction, Gaussian fits and the Frechet distance."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..nn.layers import Conv2d, LeakyReLU


class InsufficientSamplesError(ValueError):
    pass


@dataclass
class FeatureStats:
    mean: np.ndarray
    covariance: np.ndarray
    n: int

    @property
    def d(self) -> int:
        return self.mean.shape[0]


class ConvFeatureExtractor:
    """Three stride-2 convs with leaky ReLU, then global average pooling."""

    def __init__(self, convs: list[Conv2d], description: dict):
        self.convs = convs
        self.description = description
        self.act = LeakyReLU(0.2)

    @property
    def d(self) -> int:
        return self.convs[-1].out_ch

    @property
    def in_channels(self) -> int:
        return self.convs[0].in_ch

    @classmethod
    def random_projection(cls, seed: int = 0, d: int = 64, in_channels: int = 3) -> "ConvFeatureExtractor":
        """Untrained encoder with He-scaled Gaussian weights drawn from ``seed``."""
        if d < 4:
            raise ValueError("feature dimension must be >= 4")
        rng = np.random.default_rng([seed, d, in_channels])
        widths = [in_channels, max(d // 4, 1), max(d // 2, 1), d]
        convs = []
        for cin, cout in zip(widths[:-1], widths[1:]):
            std = np.sqrt(2.0 / (cin * 16))
            convs.append(Conv2d(cin, cout, 4, 2, 1, bias=False, rng=rng, std=std, dtype=np.float64))
        return cls(convs, {"kind": "random_projection", "seed": seed, "d": d})

    @classmethod
    def from_weights(cls, path: str | Path) -> "ConvFeatureExtractor":
        meta, tensors = load_checkpoint(path)
        convs = []
        for i in range(3):
            key = f"conv{i}.weight"
            if key not in tensors:
                raise ValueError(f"{path}: missing tensor {key!r}")
            w = tensors[key].astype(np.float64)
            conv = Conv2d(w.shape[1], w.shape[0], 4, 2, 1, bias=f"conv{i}.bias" in tensors, dtype=np.float64)
            conv.params["weight"] = w
            if f"conv{i}.bias" in tensors:
                conv.params["bias"] = tensors[f"conv{i}.bias"].astype(np.float64)
            conv.zero_grad()
            convs.append(conv)
        return cls(convs, {"kind": "external", "weights": str(path), "d": convs[-1].out_ch})

    def save_weights(self, path: str | Path) -> Path:
        tensors = {}
        for i, conv in enumerate(self.convs):
            for key, value in conv.params.items():
                tensors[f"conv{i}.{key}"] = value
        return save_checkpoint(path, tensors, {"kind": "feature_extractor"})

    def __call__(self, images: list[np.ndarray], chunk: int = 64) -> np.ndarray:
        return extract_features(images, self, chunk)


def extract_features(images: list[np.ndarray], extractor: ConvFeatureExtractor, chunk: int = 64) -> np.ndarray:
    """Map N images of identical size to an ``(N, d)`` feature matrix."""
    if len(images) == 0:
        raise InsufficientSamplesError("no images to extract features from")
    shape = np.shape(images[0])
    for i, im in enumerate(images):
        if np.shape(im) != shape:
            raise ValueError(f"image {i} has shape {np.shape(im)}, expected {shape}")
    if shape[2] != extractor.in_channels:
        raise ValueError(f"extractor expects {extractor.in_channels} channels, images have {shape[2]}")
    rows = []
    for start in range(0, len(images), chunk):
        batch = np.stack(images[start : start + chunk]).transpose(0, 3, 1, 2).astype(np.float64) * 2.0 - 1.0
        h = batch
        for i, conv in enumerate(extractor.convs):
            h = conv.forward(h)
            if i < len(extractor.convs) - 1:
                h = extractor.act.forward(h)
        rows.append(h.mean(axis=(2, 3)))
    return np.concatenate(rows, axis=0)


def gaussian_stats(features: np.ndarray, reg: float = 1e-6) -> FeatureStats:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n < 2:
        raise InsufficientSamplesError(f"need at least 2 feature rows, got {n}")
    mu = x.mean(axis=0)
    xc = x - mu
    cov = xc.T @ xc / (n - 1)
    cov = (cov + cov.T) / 2.0 + reg * np.eye(d)
    return FeatureStats(mu, cov, n)


def sqrtm_psd(m: np.ndarray, sym_tol: float = 1e-8) -> np.ndarray:
    """Square root of a symmetric PSD matrix via its eigendecomposition."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > sym_tol * scale:
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    return (root + root.T) / 2.0


def fid_components(a: FeatureStats, b: FeatureStats) -> dict:
    if a.d != b.d:
        raise ValueError(f"feature dimensions differ: {a.d} vs {b.d}")
    diff = a.mean - b.mean
    root_a = sqrtm_psd(a.covariance)
    inner = root_a @ b.covariance @ root_a
    cross = sqrtm_psd((inner + inner.T) / 2.0)
    raw = float(diff @ diff + np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * np.trace(cross))
    return {"fid": max(raw, 0.0), "raw": raw}


def fid(a: FeatureStats, b: FeatureStats) -> float:
    """Frechet distance between two Gaussian fits (symmetric-product form)."""
    return fid_components(a, b)["fid"]
