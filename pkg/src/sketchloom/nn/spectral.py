"""Spectral normalization by power iteration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SpectralState:
    u: np.ndarray
    n_power_iterations: int = 1
    epsilon: float = 1e-12

    @classmethod
    def random(cls, rows: int, rng: np.random.Generator, dtype=np.float32, n_power_iterations: int = 1):
        u = rng.standard_normal(rows)
        return cls((u / np.linalg.norm(u)).astype(dtype), n_power_iterations)


def _normalize(x: np.ndarray, eps: float) -> np.ndarray:
    return x / max(float(np.linalg.norm(x)), eps)


def power_iteration(w: np.ndarray, u: np.ndarray, n_iter: int, eps: float = 1e-12):
    """Run ``n_iter`` rounds of v <- W^T u, u <- W v. Returns (u, v, sigma).

    With ``n_iter == 0`` the stored ``u`` is kept and v is derived from it.
    """
    for _ in range(n_iter):
        v = _normalize(w.T @ u, eps)
        u = _normalize(w @ v, eps)
    v = _normalize(w.T @ u, eps)
    sigma = float(u @ (w @ v))
    return u, v, sigma


def spectral_normalize(weight: np.ndarray, state: SpectralState, update: bool = True):
    """Divide the ``(out, fan_in)`` matrix by its estimated largest singular value.

    Returns ``(normalized, new_state)``; ``weight`` itself is untouched.
    """
    n_iter = state.n_power_iterations if update else 0
    u, _v, sigma = power_iteration(weight, state.u, n_iter, state.epsilon)
    normalized = weight / max(sigma, state.epsilon)
    return normalized, SpectralState(u.astype(state.u.dtype), state.n_power_iterations, state.epsilon)


def spectral_backward(grad_normalized: np.ndarray, normalized: np.ndarray, u, v, sigma: float, eps: float):
    """Map dL/dW_bar to dL/dW with u and v held fixed (d sigma / dW = u v^T)."""
    sigma = max(sigma, eps)
    coef = float(np.sum(grad_normalized * normalized))
    return (grad_normalized - coef * np.outer(u, v)) / sigma
