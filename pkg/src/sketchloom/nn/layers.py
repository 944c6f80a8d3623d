"""Layers with hand-written forward and backward passes.

Activations are ``(batch, channels, height, width)`` arrays. Each layer caches
what its backward pass needs during ``forward``; parameter gradients
accumulate into ``layer.grads`` until :meth:`Layer.zero_grad`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..rng import SplitMix64
from .spectral import SpectralState


class ShapeError(ValueError):
    pass


class StateError(RuntimeError):
    pass


@dataclass
class Mode:
    training: bool = False
    rng: SplitMix64 | None = None


EVAL = Mode(training=False)


def conv_output_size(side: int, kernel: int, stride: int, pad: int) -> int:
    return (side + 2 * pad - kernel) // stride + 1


def im2col(x: np.ndarray, k: int, s: int, p: int):
    """``(N, C, H, W)`` -> ``(N*Ho*Wo, k*k*C)`` patch matrix plus ``(Ho, Wo)``.

    Patch columns are ordered ``(ki, kj, c)`` so the gather reads whole
    channel runs; weights are permuted to match.
    """
    n, c, h, w = x.shape
    xh = x.transpose(0, 2, 3, 1)
    xp = np.pad(xh, ((0, 0), (p, p), (p, p), (0, 0))) if p else np.ascontiguousarray(xh)
    ho = conv_output_size(h, k, s, p)
    wo = conv_output_size(w, k, s, p)
    sn, sh, sw, sc = xp.strides
    win = as_strided(xp, (n, ho, wo, k, k, c), (sn, s * sh, s * sw, sh, sw, sc), writeable=False)
    return win.reshape(n * ho * wo, k * k * c), ho, wo


def col2im(cols: np.ndarray, shape: tuple, k: int, s: int, p: int, ho: int, wo: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patches back into an ``shape`` array."""
    n, c, h, w = shape
    cols = cols.reshape(n, ho, wo, k, k, c)
    out = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, i : i + s * ho : s, j : j + s * wo : s, :] += cols[:, :, :, i, j, :]
    return out[:, p : p + h, p : p + w, :].transpose(0, 3, 1, 2)


class Layer:
    name = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, mode: Mode = EVAL) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        cache, self._cache = self._cache, None
        return cache

    def zero_grad(self):
        for key, value in self.params.items():
            g = self.grads.get(key)
            if g is not None and g.shape == value.shape and g.dtype == value.dtype:
                g.fill(0)
            else:
                self.grads[key] = np.zeros_like(value)

    def astype(self, dtype):
        for store in (self.params, self.buffers):
            for key in store:
                store[key] = store[key].astype(dtype)
        self.zero_grad()
        return self

    def __repr__(self):
        return f"{type(self).__name__}()"


class _ConvBase(Layer):
    """Shared weight handling, including optional spectral normalization."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray | None, stride: int, pad: int):
        super().__init__()
        self.stride = stride
        self.pad = pad
        self.kernel = weight.shape[-1]
        self.params["weight"] = weight
        if bias is not None:
            self.params["bias"] = bias
        self.n_power_iterations = 1
        self._sn = None
        self.zero_grad()

    @property
    def spectral(self) -> bool:
        return "sn_u" in self.buffers

    def enable_spectral_norm(self, rng: np.random.Generator, n_power_iterations: int = 1):
        rows = self.params["weight"].shape[self.rows_axis]
        state = SpectralState.random(rows, rng, self.params["weight"].dtype, n_power_iterations)
        self.buffers["sn_u"] = state.u
        self.n_power_iterations = n_power_iterations

    # The spectral matrix has one row per output channel. _mat_vec and
    # _mat_t_vec work on the weight in its own layout without copies; the
    # _patch helpers translate to and from the im2col matrix layout.
    rows_axis = 0

    def _mat_vec(self, w, v):
        raise NotImplementedError

    def _mat_t_vec(self, w, u):
        raise NotImplementedError

    def _to_patch(self, w):
        raise NotImplementedError

    def _from_patch(self, mat):
        raise NotImplementedError

    def _patch_outer(self, u, v):
        raise NotImplementedError

    def matrix_view(self) -> np.ndarray:
        w = self.params["weight"]
        return np.moveaxis(w, self.rows_axis, 0).reshape(w.shape[self.rows_axis], -1)

    def effective_weight(self, mode: Mode) -> np.ndarray:
        w = self.params["weight"]
        if not self.spectral:
            return w
        eps = 1e-12
        u = self.buffers["sn_u"]
        n_iter = self.n_power_iterations if mode.training else 0
        for _ in range(n_iter):
            v = self._mat_t_vec(w, u)
            v = v / max(float(np.linalg.norm(v)), eps)
            u = self._mat_vec(w, v)
            u = u / max(float(np.linalg.norm(u)), eps)
        v = self._mat_t_vec(w, u)
        v = v / max(float(np.linalg.norm(v)), eps)
        sigma = max(float(u @ self._mat_vec(w, v)), eps)
        if mode.training:
            self.buffers["sn_u"] = u.astype(w.dtype, copy=False)
        self._sn = (u, v, sigma)
        return w * w.dtype.type(1.0 / sigma)

    def _patch_weight(self, mode: Mode) -> np.ndarray:
        return self._to_patch(self.effective_weight(mode))

    def _accumulate_weight_grad(self, dmat: np.ndarray, wm: np.ndarray):
        """Add a patch-layout gradient w.r.t. the effective weight ``wm``."""
        grad = self.grads["weight"]
        if self.spectral:
            # d(W / sigma) with u, v fixed: (G - <G, W_bar> u v^T) / sigma
            u, v, sigma = self._sn
            dt = grad.dtype.type
            coef = float(np.vdot(dmat, wm))
            dmat = dmat - self._patch_outer(u.astype(grad.dtype) * dt(coef), v.astype(grad.dtype))
            dmat *= dt(1.0 / sigma)
        grad += self._from_patch(dmat)


class Conv2d(_ConvBase):
    name = "conv2d"

    def __init__(self, in_ch: int, out_ch: int, kernel=4, stride=2, pad=1, bias=True, rng=None, std=0.02, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        w = (rng.standard_normal((out_ch, in_ch, kernel, kernel)) * std).astype(dtype)
        b = np.zeros(out_ch, dtype=dtype) if bias else None
        super().__init__(w, b, stride, pad)
        self.in_ch, self.out_ch = in_ch, out_ch

    def _mat_vec(self, w, v):
        return w.reshape(w.shape[0], -1) @ v.reshape(-1)

    def _mat_t_vec(self, w, u):
        return (u @ w.reshape(w.shape[0], -1)).reshape(w.shape[1:])

    def _to_patch(self, w):
        return w.transpose(0, 2, 3, 1).reshape(self.out_ch, -1)

    def _from_patch(self, mat):
        k = self.kernel
        return mat.reshape(self.out_ch, k, k, self.in_ch).transpose(0, 3, 1, 2)

    def _patch_outer(self, u, v):
        return np.outer(u, v.transpose(1, 2, 0).reshape(-1))

    def forward(self, x, mode=EVAL):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(f"{self.name} expects (N, {self.in_ch}, H, W) input, got {x.shape}")
        if x.shape[2] + 2 * self.pad < self.kernel or x.shape[3] + 2 * self.pad < self.kernel:
            raise ShapeError(f"{self.name} kernel {self.kernel} larger than padded input {x.shape}")
        wm = self._patch_weight(mode)
        cols, ho, wo = im2col(x, self.kernel, self.stride, self.pad)
        out = cols @ wm.T
        if "bias" in self.params:
            out += self.params["bias"]
        self._cache = (x.shape, cols, wm, ho, wo)
        return out.reshape(x.shape[0], ho, wo, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, dy):
        shape, cols, wm, ho, wo = self._take_cache()
        dym = dy.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        self._accumulate_weight_grad(dym.T @ cols, wm)
        if "bias" in self.params:
            self.grads["bias"] += dym.sum(axis=0)
        return col2im(dym @ wm, shape, self.kernel, self.stride, self.pad, ho, wo)

    def __repr__(self):
        sn = ", spectral" if self.spectral else ""
        return f"Conv2d({self.in_ch}, {self.out_ch}, k={self.kernel}, s={self.stride}, p={self.pad}{sn})"


class ConvTranspose2d(_ConvBase):
    """Transposed convolution; weight layout ``(in, out, k, k)``."""

    name = "transposed_conv2d"

    def __init__(self, in_ch: int, out_ch: int, kernel=4, stride=2, pad=1, bias=True, rng=None, std=0.02, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        w = (rng.standard_normal((in_ch, out_ch, kernel, kernel)) * std).astype(dtype)
        b = np.zeros(out_ch, dtype=dtype) if bias else None
        super().__init__(w, b, stride, pad)
        self.in_ch, self.out_ch = in_ch, out_ch

    rows_axis = 1

    def _mat_vec(self, w, v):
        w3 = w.reshape(self.in_ch, self.out_ch, -1)
        return np.matmul(w3, v.reshape(self.in_ch, -1, 1)).sum(axis=0)[:, 0]

    def _mat_t_vec(self, w, u):
        return (u @ w.reshape(self.in_ch, self.out_ch, -1)).reshape(self.in_ch, self.kernel, self.kernel)

    def _to_patch(self, w):
        return w.transpose(0, 2, 3, 1).reshape(self.in_ch, -1)

    def _from_patch(self, mat):
        k = self.kernel
        return mat.reshape(self.in_ch, k, k, self.out_ch).transpose(0, 3, 1, 2)

    def _patch_outer(self, u, v):
        return np.multiply.outer(v, u).reshape(self.in_ch, -1)

    def output_size(self, side: int) -> int:
        return (side - 1) * self.stride - 2 * self.pad + self.kernel

    def forward(self, x, mode=EVAL):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeError(f"{self.name} expects (N, {self.in_ch}, H, W) input, got {x.shape}")
        wm = self._patch_weight(mode)
        n, _, h, wd = x.shape
        xm = x.transpose(0, 2, 3, 1).reshape(-1, self.in_ch)
        out_shape = (n, self.out_ch, self.output_size(h), self.output_size(wd))
        out = col2im(xm @ wm, out_shape, self.kernel, self.stride, self.pad, h, wd)
        if "bias" in self.params:
            out = out + self.params["bias"][None, :, None, None]
        self._cache = (x.shape, xm, wm)
        return out

    def backward(self, dy):
        shape, xm, wm = self._take_cache()
        dcols, _, _ = im2col(dy, self.kernel, self.stride, self.pad)
        self._accumulate_weight_grad(xm.T @ dcols, wm)
        if "bias" in self.params:
            self.grads["bias"] += dy.sum(axis=(0, 2, 3))
        n, _, h, w = shape
        return (dcols @ wm.T).reshape(n, h, w, self.in_ch).transpose(0, 3, 1, 2)

    def __repr__(self):
        sn = ", spectral" if self.spectral else ""
        return f"ConvTranspose2d({self.in_ch}, {self.out_ch}, k={self.kernel}, s={self.stride}, p={self.pad}{sn})"


class InstanceNorm(Layer):
    """Per-sample, per-channel normalization over the spatial axes (no affine)."""

    name = "instance_norm"

    def __init__(self, eps: float = 1e-5):
        super().__init__()
        self.eps = eps

    def forward(self, x, mode=EVAL):
        mean = x.mean(axis=(2, 3), keepdims=True)
        xc = x - mean
        inv_std = 1.0 / np.sqrt((xc * xc).mean(axis=(2, 3), keepdims=True) + self.eps)
        xhat = xc * inv_std
        self._cache = (xhat, inv_std)
        return xhat

    def backward(self, dy):
        xhat, inv_std = self._take_cache()
        mean_dy = dy.mean(axis=(2, 3), keepdims=True)
        mean_dy_xhat = (dy * xhat).mean(axis=(2, 3), keepdims=True)
        return inv_std * (dy - mean_dy - xhat * mean_dy_xhat)


class LeakyReLU(Layer):
    name = "leaky_relu"

    def __init__(self, slope: float = 0.2):
        super().__init__()
        self.slope = slope

    def forward(self, x, mode=EVAL):
        mask = x > 0
        self._cache = mask
        return np.where(mask, x, x * self.slope)

    def backward(self, dy):
        mask = self._take_cache()
        return np.where(mask, dy, dy * self.slope)


class ReLU(Layer):
    name = "relu"

    def forward(self, x, mode=EVAL):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dy):
        return dy * self._take_cache()


class Tanh(Layer):
    name = "tanh"

    def forward(self, x, mode=EVAL):
        y = np.tanh(x)
        self._cache = y
        return y

    def backward(self, dy):
        y = self._take_cache()
        return dy * (1.0 - y * y)


class Dropout(Layer):
    """Inverted dropout; active only when ``mode.training``."""

    name = "dropout"

    def __init__(self, p: float = 0.5):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
        self.p = p

    def forward(self, x, mode=EVAL):
        if not mode.training or self.p == 0.0:
            self._cache = None
            self._passthrough = True
            return x
        if mode.rng is None:
            raise StateError("dropout in training mode needs a random stream")
        self._passthrough = False
        keep = mode.rng.uniform(x.shape) >= self.p
        scale = (keep / (1.0 - self.p)).astype(x.dtype)
        self._cache = scale
        return x * scale

    def backward(self, dy):
        if getattr(self, "_passthrough", False):
            return dy
        return dy * self._take_cache()


class Sequential(Layer):
    name = "sequential"

    def __init__(self, *layers: Layer):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x, mode=EVAL):
        for layer in self.layers:
            x = layer.forward(x, mode)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def named_layers(self, prefix: str = ""):
        for i, layer in enumerate(self.layers):
            yield f"{prefix}{i}", layer

    def __repr__(self):
        inner = ", ".join(repr(layer) for layer in self.layers)
        return f"Sequential({inner})"


_ACTIVATIONS = {"leaky_relu": LeakyReLU, "relu": ReLU, "tanh": Tanh, "instance_norm": InstanceNorm}


def layer_forward(kind: str, x: np.ndarray, mode: Mode = EVAL, **kwargs) -> tuple[Layer, np.ndarray]:
    """Build a layer by name and run it once; returns ``(layer, output)``."""
    if kind == "conv2d":
        layer = Conv2d(**kwargs)
    elif kind == "transposed_conv2d":
        layer = ConvTranspose2d(**kwargs)
    elif kind == "dropout":
        layer = Dropout(**kwargs)
    elif kind in _ACTIVATIONS:
        layer = _ACTIVATIONS[kind](**kwargs)
    else:
        raise ValueError(f"unknown layer kind {kind!r}")
    return layer, layer.forward(x, mode)


def layer_backward(layer: Layer, upstream: np.ndarray):
    """Input gradient plus a copy of the layer's parameter gradients."""
    dx = layer.backward(upstream)
    return dx, {k: v.copy() for k, v in layer.grads.items()}
