"""Multi-run aggregation with Student-t confidence intervals."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats


class InsufficientRunsError(ValueError):
    pass


@dataclass
class RunSeries:
    run_seed: int
    points: list[tuple[int, float]] = field(default_factory=list)
    raw: list[float] = field(default_factory=list)

    @property
    def stages(self) -> list[int]:
        return [s for s, _ in self.points]

    @property
    def values(self) -> list[float]:
        return [v for _, v in self.points]

    def add(self, stage: int, value: float, raw: float | None = None):
        if self.points and stage <= self.points[-1][0]:
            raise ValueError(f"stage {stage} does not follow {self.points[-1][0]}")
        if value < 0:
            raise ValueError("FID must be non-negative")
        self.points.append((int(stage), float(value)))
        self.raw.append(float(value if raw is None else raw))

    def to_json(self) -> dict:
        return {"run_seed": self.run_seed, "points": [list(p) for p in self.points], "raw": self.raw}

    @classmethod
    def from_json(cls, doc: dict) -> "RunSeries":
        return cls(int(doc["run_seed"]), [(int(s), float(v)) for s, v in doc["points"]], list(doc.get("raw", [])))

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RunSeries":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class AggregatedSeries:
    stages: list[int]
    mean: list[float]
    ci_half_width: list[float]
    confidence: float
    n_runs: int
    variant: str = ""

    @property
    def ci_lo(self) -> list[float]:
        return [m - h for m, h in zip(self.mean, self.ci_half_width)]

    @property
    def ci_hi(self) -> list[float]:
        return [m + h for m, h in zip(self.mean, self.ci_half_width)]


def t_quantile(confidence: float, n: int) -> float:
    """Two-sided Student-t critical value for ``n`` samples."""
    return float(stats.t.ppf((1.0 + confidence) / 2.0, n - 1))


def aggregate_runs(series: list[RunSeries], confidence: float = 0.99, variant: str = "") -> AggregatedSeries:
    if len(series) < 2:
        raise InsufficientRunsError(f"need at least 2 runs to aggregate, got {len(series)}")
    stages = series[0].stages
    for s in series[1:]:
        if s.stages != stages:
            raise ValueError(f"run {s.run_seed} has stages {s.stages}, expected {stages}")
    values = np.array([s.values for s in series], dtype=np.float64)
    n = values.shape[0]
    mean = [float(np.sum(col) / n) for col in values.T]
    sd = values.std(axis=0, ddof=1)
    half = t_quantile(confidence, n) * sd / np.sqrt(n)
    return AggregatedSeries(list(stages), mean, [float(h) for h in half], confidence, n, variant)
