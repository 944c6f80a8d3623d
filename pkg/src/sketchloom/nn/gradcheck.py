"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .layers import EVAL


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    checked: list[tuple[str, int, float, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    @property
    def names(self) -> set[str]:
        return {c[0] for c in self.checked}


def relative_error(analytic: float, numeric: float, floor: float = 1e-10) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(network, x: np.ndarray, tolerance: float = 1e-5, n_samples: int = 128, h: float = 1e-5, seed: int = 0, order: int = 2) -> GradCheckReport:
    """Compare backprop against central differences of ``sum(network(x))``.

    Runs on a float64 copy of ``network`` in inference mode. Parameters in
    ``network.frozen`` are never sampled. ``order=4`` uses the five-point
    stencil, for layers whose curvature swamps the O(h^2) central error.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    net = copy.deepcopy(network).astype(np.float64)
    x = np.asarray(x, dtype=np.float64)

    net.zero_grad()
    y = net.forward(x, EVAL)
    net.backward(np.ones_like(y))
    params = net.named_parameters()
    grads = net.named_grads()

    names = [n for n in net.trainable_names()]
    sizes = np.array([params[n].size for n in names])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_samples, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    report = GradCheckReport(0.0, tolerance)
    for flat in sorted(picks):
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, idx = names[k], int(flat - offsets[k])
        p = params[name].reshape(-1)
        orig = p[idx]

        def f(delta):
            p[idx] = orig + delta
            return float(net.forward(x, EVAL).sum())

        if order == 2:
            numeric = (f(h) - f(-h)) / (2 * h)
        else:
            numeric = (8 * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12 * h)
        p[idx] = orig
        analytic = float(grads[name].reshape(-1)[idx])
        err = relative_error(analytic, numeric)
        report.checked.append((name, idx, analytic, numeric, err))
        report.max_rel_error = max(report.max_rel_error, err)
    return report
