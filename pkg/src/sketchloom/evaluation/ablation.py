"""Seeded multi-run ablations over named config variants."""

from __future__ import annotations

import json
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..config import ConfigError, ConfigFile, apply_overrides, config_from_dict
from ..dataset import DatasetManifest
from .aggregate import AggregatedSeries, RunSeries, aggregate_runs
from .report import emit_series, write_series_csv

log = logging.getLogger(__name__)

PRESETS = {
    "batch-size": [
        ("batch_1", {"train.batch_size": 1}),
        ("batch_5", {"train.batch_size": 5}),
    ],
    "spectral-norm": [
        ("sn_generator", {"train.spectral_norm_target": "generator"}),
        ("sn_none", {"train.spectral_norm_target": "none"}),
    ],
    "d-steps": [
        (f"d{k}_{sn}", {"train.d_steps_per_g_step": k, "train.spectral_norm_target": target})
        for sn, target in (("sn", "generator"), ("nosn", "none"))
        for k in (2, 4, 6)
    ],
    "lr-policy": [
        ("cyclical", {"train.lr_policy": "cyclical_triangular"}),
        ("constant_max", {"train.lr_policy": "constant"}),
    ],
}


@dataclass
class AblationSpec:
    variants: list[tuple[str, dict]]
    runs_per_variant: int = 10
    base_seed: int = 0

    @classmethod
    def from_json(cls, doc) -> "AblationSpec":
        if not isinstance(doc, dict) or not isinstance(doc.get("variants"), list):
            raise ConfigError("ablation spec needs a 'variants' list")
        variants = []
        for i, v in enumerate(doc["variants"]):
            if not isinstance(v, dict) or "name" not in v:
                raise ConfigError(f"variant {i} needs a 'name'")
            overrides = v.get("overrides", {})
            if not isinstance(overrides, dict):
                raise ConfigError(f"variant {v['name']!r}: overrides must be an object")
            variants.append((str(v["name"]), dict(overrides)))
        names = [n for n, _ in variants]
        if len(set(names)) != len(names):
            raise ConfigError("variant names must be unique")
        runs = doc.get("runs_per_variant", 10)
        if not isinstance(runs, int) or runs < 1:
            raise ConfigError("runs_per_variant must be a positive integer")
        seed = doc.get("base_seed", 0)
        if not isinstance(seed, int):
            raise ConfigError("base_seed must be an integer")
        return cls(variants, runs, seed)

    @classmethod
    def load(cls, path: str | Path) -> "AblationSpec":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc})") from None
        return cls.from_json(doc)

    @classmethod
    def preset(cls, name: str, runs_per_variant: int = 10, base_seed: int = 0) -> "AblationSpec":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls([(n, dict(o)) for n, o in PRESETS[name]], runs_per_variant, base_seed)

    def to_json(self) -> dict:
        return {
            "variants": [{"name": n, "overrides": o} for n, o in self.variants],
            "runs_per_variant": self.runs_per_variant,
            "base_seed": self.base_seed,
        }


@dataclass
class AblationReport:
    out_dir: Path
    aggregated: dict[str, AggregatedSeries] = field(default_factory=dict)
    raw: dict[str, list[RunSeries]] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    aggregation_errors: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def worker_count() -> int:
    """Process cap from ``SKETCHLOOM_THREADS`` (unset or 0 means one per CPU)."""
    raw = os.environ.get("SKETCHLOOM_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SKETCHLOOM_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("SKETCHLOOM_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _one_run(job: tuple) -> dict:
    from ..training import train

    variant, index, cfg_dict, manifest_path, run_dir = job
    try:
        cfg = config_from_dict(cfg_dict)
        manifest = DatasetManifest.load(manifest_path)
        art = train(cfg, manifest, run_dir)
        return {"variant": variant, "index": index, "series": art.fid_series.to_json()}
    except Exception as exc:  # one failed run must not sink the report
        return {
            "variant": variant,
            "index": index,
            "seed": cfg_dict["train"]["seed"],
            "error": f"{type(exc).__name__}: {exc}",
            "traceback": traceback.format_exc(),
        }


def _trend_check(report: AblationReport) -> dict:
    """Does the batch-5 mean curve sit at or above batch 1 at every stage?"""
    a, b = report.aggregated.get("batch_1"), report.aggregated.get("batch_5")
    if a is None or b is None or a.stages != b.stages:
        return {}
    per_stage = [bm >= am for am, bm in zip(a.mean, b.mean)]
    return {
        "batch5_fid_ge_batch1_all_stages": all(per_stage),
        "per_stage": dict(zip(map(str, a.stages), per_stage)),
        "asserted": False,
        "note": "expected direction only; small-scale GAN outcomes are seed-sensitive",
    }


def run_ablation(
    spec: AblationSpec | dict,
    base: ConfigFile,
    manifest: DatasetManifest,
    out_dir: str | Path,
    workers: int | None = None,
    confidence: float = 0.99,
) -> AblationReport:
    """Train ``runs_per_variant`` seeded runs per variant and aggregate them.

    Run ``i`` of every variant uses seed ``base_seed + i``, so variants are
    compared on matched seeds.
    """
    if isinstance(spec, dict):
        spec = AblationSpec.from_json(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if manifest.root is None:
        raise ValueError("manifest must be loaded from or saved to disk")
    manifest_path = str(Path(manifest.root) / "manifest.json")
    (out / "ablation_spec.json").write_text(json.dumps(spec.to_json(), indent=2) + "\n")

    jobs = []
    for name, overrides in spec.variants:
        cfg = apply_overrides(base, overrides)
        for i in range(spec.runs_per_variant):
            run_cfg = apply_overrides(cfg, {"train.seed": spec.base_seed + i}).validate()
            jobs.append((name, i, run_cfg.to_dict(), manifest_path, str(out / name / f"run_{i:02d}")))

    n_workers = workers if workers is not None else worker_count()
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
            results = list(pool.map(_one_run, jobs))
    else:
        results = [_one_run(j) for j in jobs]

    report = AblationReport(out)
    for r in results:
        if "error" in r:
            report.failures.append(r)
            log.warning("variant %s run %d failed: %s", r["variant"], r["index"], r["error"])
            continue
        report.raw.setdefault(r["variant"], []).append(RunSeries.from_json(r["series"]))

    for name, _ in spec.variants:
        runs = report.raw.get(name, [])
        vdir = out / name
        vdir.mkdir(parents=True, exist_ok=True)
        (vdir / "raw_series.json").write_text(json.dumps([s.to_json() for s in runs], indent=2) + "\n")
        try:
            agg = aggregate_runs(runs, confidence, variant=name)
        except ValueError as exc:
            report.aggregation_errors[name] = f"{type(exc).__name__}: {exc}"
            continue
        report.aggregated[name] = agg
        write_series_csv([agg], out / f"{name}.csv")

    if report.aggregated:
        emit_series(list(report.aggregated.values()), out / "curves", title="FID by training stage")

    summary = {
        "confidence": confidence,
        "runs_per_variant": spec.runs_per_variant,
        "variants": {},
        "failures": [{k: f[k] for k in ("variant", "index", "seed", "error")} for f in report.failures],
        "aggregation_errors": report.aggregation_errors,
    }
    for name, agg in report.aggregated.items():
        summary["variants"][name] = {
            "n_runs": agg.n_runs,
            "final_stage": agg.stages[-1],
            "final_mean_fid": agg.mean[-1],
            "final_ci_half_width": agg.ci_half_width[-1],
            "final_ci": [agg.ci_lo[-1], agg.ci_hi[-1]],
        }
    trend = _trend_check(report)
    if trend:
        summary["trend_check"] = trend
    report.summary = summary
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return report
