"""``sketchloom`` command line: prepare, train, eval, ablate, generate.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Any config key can be overridden with a dotted flag, e.g.
``--train.batch_size 5``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ConfigFile, apply_overrides, config_from_dict, load_config
from .dataset import DatasetManifest, DatasetTooSmallError, build_manifest, generate_synthetic_corpus
from .image import gray_to_rgb, load_image, save_image, to_grayscale
from .png import PNGDecodeError

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("sketchloom")


class UsageError(Exception):
    pass


def _split_overrides(extra: list[str]) -> dict[str, str]:
    """``['--train.batch_size', '5', '--eval.feature_dim=32']`` -> dict."""
    out: dict[str, str] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok:
            raise UsageError(f"unrecognized argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"{tok} needs a value")
            i += 1
            value = extra[i]
        out[key] = value
        i += 1
    return out


def _resolve_config(path: str | None, overrides: dict[str, str]) -> ConfigFile:
    cfg = load_config(path) if path else ConfigFile()
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg.validate()


def _attach_log_file(out: Path):
    # timestamps go here and nowhere else, so run directories stay reproducible
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "sketchloom.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    logging.getLogger("sketchloom").addHandler(handler)
    logging.getLogger("sketchloom").setLevel(logging.INFO)
    return handler


def _load_manifest(path: str | None) -> DatasetManifest:
    if not path:
        raise UsageError("no manifest given (use --manifest or dataset.manifest in the config)")
    p = Path(path)
    if not (p.is_file() or (p / "manifest.json").is_file()):
        raise UsageError(f"manifest not found: {path}")
    try:
        return DatasetManifest.load(p)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{path}: unreadable manifest ({exc})") from None


# ---------------------------------------------------------------- commands


def cmd_prepare(args, overrides) -> int:
    if overrides:
        raise UsageError("prepare takes no config overrides")
    if args.photos is None and args.synthetic is None:
        raise UsageError("prepare needs --photos DIR or --synthetic N")
    if args.photos is not None and args.synthetic is not None:
        raise UsageError("--photos and --synthetic are mutually exclusive")
    out = Path(args.out)
    if args.synthetic is not None:
        manifest = generate_synthetic_corpus(args.synthetic, args.size, args.seed, out, args.split_ratio)
    else:
        if not Path(args.photos).is_dir():
            raise UsageError(f"photo directory not found: {args.photos}")
        manifest = build_manifest(
            args.photos, split_ratio=args.split_ratio, seed=args.seed, out_dir=out, size=args.size,
            near_dup_threshold=args.near_dup_threshold,
        )
    meta = manifest.metadata
    print(f"train: {len(manifest.train)}  test: {len(manifest.test)}")
    if meta.get("duplicates_removed"):
        print(f"duplicates removed: {len(meta['duplicates_removed'])}")
    if meta.get("skipped"):
        print(f"skipped: {len(meta['skipped'])}")
    if meta.get("background_warnings"):
        print(f"background warnings: {len(meta['background_warnings'])}")
    print(f"manifest: {out / 'manifest.json'}")
    return EXIT_OK


def cmd_train(args, overrides) -> int:
    from .training import train

    cfg = _resolve_config(args.config, overrides)
    if args.manifest:
        cfg.dataset.manifest = str(Path(args.manifest).resolve())
    manifest = _load_manifest(cfg.dataset.manifest)
    if args.resume and not Path(args.resume).is_file():
        raise UsageError(f"checkpoint not found: {args.resume}")
    out = Path(args.out)
    _attach_log_file(out)
    art = train(cfg, manifest, out, resume=args.resume)
    series = art.fid_series
    if series is not None and series.points:
        for stage, value in series.points:
            print(f"stage {stage}: FID {value:.6f}")
    print(f"G steps: {len(art.metrics_log)}  D updates: {len(art.d_log)}  out: {out}")
    return EXIT_OK


def cmd_eval(args, overrides) -> int:
    from .training import FidEvaluator, load_generator

    if not Path(args.checkpoint).is_file():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    generator, meta = load_generator(args.checkpoint)
    cfg = config_from_dict(meta["config"]) if "config" in meta else ConfigFile()
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    cfg.eval.validate()
    manifest = _load_manifest(args.manifest or cfg.dataset.manifest)
    evaluator = FidEvaluator(manifest, cfg.model.image_size, cfg.eval)
    result = evaluator(generator)
    entry = {
        "checkpoint": str(args.checkpoint),
        "step": meta.get("step"),
        "fid": result["fid"],
        "raw": result["raw"],
        "n_test": len(evaluator.sketches),
        "extractor": evaluator.extractor.description,
    }
    print(f"FID {result['fid']:.6f} (step {meta.get('step')}, {entry['n_test']} test samples)")
    if args.report:
        path = Path(args.report)
        doc = json.loads(path.read_text()) if path.exists() else {"evaluations": []}
        for prev in doc.get("evaluations", []):
            if prev["extractor"].get("d") != evaluator.extractor.d:
                raise ConfigError(
                    f"{path} holds FID at feature dim {prev['extractor'].get('d')}, "
                    f"extractor has {evaluator.extractor.d}; values would not be comparable"
                )
        doc["evaluations"].append(entry)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_ablate(args, overrides) -> int:
    from .evaluation.ablation import AblationSpec, run_ablation

    if (args.spec is None) == (args.preset is None):
        raise UsageError("ablate needs exactly one of --spec PATH or --preset NAME")
    cfg = _resolve_config(args.config, overrides)
    if args.spec:
        if not Path(args.spec).is_file():
            raise UsageError(f"ablation spec not found: {args.spec}")
        spec = AblationSpec.load(args.spec)
        if args.runs is not None:
            spec.runs_per_variant = args.runs
    else:
        spec = AblationSpec.preset(args.preset, args.runs or 10, cfg.train.seed)
    manifest = _load_manifest(args.manifest or cfg.dataset.manifest)
    out = Path(args.out)
    _attach_log_file(out)
    report = run_ablation(spec, cfg, manifest, out)
    for name, agg in report.aggregated.items():
        print(f"{name}: final FID {agg.mean[-1]:.6f} +/- {agg.ci_half_width[-1]:.6f} ({agg.n_runs} runs)")
    for name, err in report.aggregation_errors.items():
        print(f"{name}: not aggregated ({err})")
    for f in report.failures:
        print(f"{f['variant']} run {f['index']} failed: {f['error']}")
    print(f"report: {out / 'summary.json'}")
    return EXIT_OK if not report.failures else EXIT_RUNTIME


def _contact_sheet(pairs: list[tuple[np.ndarray, np.ndarray]], gap: int = 2) -> np.ndarray:
    """Input sketch beside generated image, one row per sketch."""
    h, w = pairs[0][1].shape[:2]
    sheet = np.ones((len(pairs) * (h + gap) - gap, 2 * w + gap, 3))
    for i, (sketch, image) in enumerate(pairs):
        y = i * (h + gap)
        sheet[y : y + h, :w] = gray_to_rgb(sketch)
        sheet[y : y + h, w + gap :] = image
    return sheet


def cmd_generate(args, overrides) -> int:
    from .nn import Mode, batch_to_images, images_to_batch
    from .training import load_generator

    if overrides:
        raise UsageError("generate takes no config overrides")
    if not Path(args.checkpoint).is_file():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    generator, meta = load_generator(args.checkpoint)
    side = ConfigFile().model.image_size
    if "config" in meta:
        side = config_from_dict(meta["config"]).model.image_size
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pairs = []
    for i, path in enumerate(args.sketch):
        sketch = to_grayscale(load_image(path))
        if sketch.shape[:2] != (side, side):
            raise RuntimeError(f"{path}: sketch is {sketch.shape[1]}x{sketch.shape[0]}, expected {side}x{side}")
        image = batch_to_images(generator.forward(images_to_batch([sketch], generator.dtype), Mode(training=False)))[0]
        save_image(image, out / f"{i:04d}_{Path(path).stem}.png")
        pairs.append((sketch, image))
    save_image(_contact_sheet(pairs), out / "contact_sheet.png")
    print(f"wrote {len(pairs)} images and a contact sheet to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sketchloom", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a paired sketch/photo dataset and its manifest")
    p.add_argument("--photos", help="directory of garment photos")
    p.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic garment photos instead")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--size", type=int, default=64, help="square side of stored images (default 64)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-ratio", type=float, default=0.8)
    p.add_argument("--near-dup-threshold", type=int, default=5, help="max hash distance counted as duplicate")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model; accepts --section.key VALUE overrides")
    p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    p.add_argument("--manifest", help="dataset manifest (overrides dataset.manifest)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="FID of a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", help="dataset manifest (defaults to the one recorded in the checkpoint)")
    p.add_argument("--report", help="JSON report to append the result to")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="seeded multi-run comparison of config variants")
    p.add_argument("--spec", help="ablation spec JSON")
    p.add_argument("--preset", choices=["batch-size", "d-steps", "spectral-norm", "lr-policy"])
    p.add_argument("--config", help="base JSON config")
    p.add_argument("--manifest")
    p.add_argument("--runs", type=int, help="runs per variant (default 10 for presets)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("generate", help="translate sketches to images with a trained generator")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sketch", nargs="+", required=True, help="sketch image file(s)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(format="%(levelname)s: %(message)s")
    for handler in logging.getLogger().handlers:
        handler.setLevel(logging.WARNING)
    try:
        overrides = _split_overrides(extra)
        return args.func(args, overrides)
    except (UsageError, ConfigError, DatasetTooSmallError) as exc:
        print(f"sketchloom {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PNGDecodeError, FileNotFoundError) as exc:
        print(f"sketchloom {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME if args.command == "generate" else EXIT_USAGE
    except Exception as exc:
        print(f"sketchloom {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
