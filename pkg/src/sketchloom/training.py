"""Adversarial training of the sketch-to-image model.

Each generator step is preceded by ``d_steps_per_g_step`` discriminator
updates. Both networks follow triangular cyclical learning-rate schedules;
the discriminator schedule is indexed by its own update counter. The
generator objective is the adversarial loss plus ``lambda_l1`` times the L1
reconstruction error.

All randomness (sample choice, augmentation, dropout) is drawn from streams
keyed on ``(seed, purpose, update counter)``, so a run resumed from a
checkpoint replays exactly what the uninterrupted run would have done.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

import numpy as np

from .augment import AugmentParams, augment_pair
from .config import ConfigError, ConfigFile, EvalConfig, ModelConfig, TrainConfig
from .dataset import DatasetManifest
from .evaluation.aggregate import RunSeries
from .evaluation.fid import ConvFeatureExtractor, extract_features, fid_components, gaussian_stats
from .image import resize_bilinear
from .nn import (
    Mode,
    Network,
    NetworkSpec,
    batch_to_images,
    build_network,
    images_to_batch,
    load_checkpoint,
    save_checkpoint,
)
from .rng import SplitMix64

log = logging.getLogger(__name__)

METRICS_HEADER = ["step", "d_loss", "g_adv_loss", "g_l1_loss", "g_lr", "d_lr"]
D_STEPS_HEADER = ["d_step", "g_step", "d_loss", "d_lr"]

__all__ = [
    "TrainConfig",
    "TrainingDivergedError",
    "RunArtifacts",
    "cyclical_lr",
    "learning_rate",
    "hinge_d_loss",
    "hinge_g_loss",
    "bce_gan_losses",
    "l1_loss",
    "AdamState",
    "adam_step",
    "Trainer",
    "train",
]


class TrainingDivergedError(RuntimeError):
    pass


# ---------------------------------------------------------------- schedules


def cyclical_lr(step: int, base: float, max_lr: float, step_size: int) -> float:
    """Triangular cyclical learning rate.

    Evaluated in decimal on the shortest repr of ``base`` and ``max_lr``, so
    that 2e-4 halfway between 1e-4 and 3e-4 is 2e-4 and not its binary
    neighbour.
    """
    if step < 0 or step_size < 1:
        raise ValueError("cyclical_lr needs step >= 0 and step_size >= 1")
    cycle = 1 + step // (2 * step_size)
    x = Fraction(abs(step - (2 * cycle - 1) * step_size), step_size)
    frac = max(Fraction(0), 1 - x)
    b, m = Decimal(repr(float(base))), Decimal(repr(float(max_lr)))
    return float(b + (m - b) * Decimal(frac.numerator) / Decimal(frac.denominator))


def learning_rate(policy: str, step: int, interval: tuple[float, float], step_size: int) -> float:
    if policy == "constant":
        return interval[1]
    if policy == "cyclical_triangular":
        return cyclical_lr(step, interval[0], interval[1], step_size)
    raise ValueError(f"unknown learning-rate policy {policy!r}")


# ---------------------------------------------------------------- losses


def hinge_d_loss(real_scores, fake_scores) -> float:
    real = np.asarray(real_scores, dtype=np.float64)
    fake = np.asarray(fake_scores, dtype=np.float64)
    if real.shape != fake.shape:
        raise ValueError(f"score maps differ in shape: {real.shape} vs {fake.shape}")
    return float(np.mean(np.maximum(0.0, 1.0 - real)) + np.mean(np.maximum(0.0, 1.0 + fake)))


def hinge_g_loss(fake_scores) -> float:
    return float(-np.mean(np.asarray(fake_scores, dtype=np.float64)))


def _softplus(x):
    return np.logaddexp(0.0, x)


def bce_gan_losses(real_scores, fake_scores) -> tuple[float, float]:
    """Sigmoid cross-entropy on raw scores: (discriminator loss, generator loss)."""
    real = np.asarray(real_scores, dtype=np.float64)
    fake = np.asarray(fake_scores, dtype=np.float64)
    d_loss = float(np.mean(_softplus(-real)) + np.mean(_softplus(fake)))
    g_loss = float(np.mean(_softplus(-fake)))
    return d_loss, g_loss


def l1_loss(generated, target) -> float:
    a, b = np.asarray(generated), np.asarray(target)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a.astype(np.float64) - b)))


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def d_loss_and_grads(kind: str, real, fake):
    """Loss plus gradients w.r.t. the real and fake score maps."""
    if kind == "hinge":
        loss = hinge_d_loss(real, fake)
        d_real = -(real < 1.0).astype(real.dtype) / real.size
        d_fake = (fake > -1.0).astype(fake.dtype) / fake.size
    else:
        loss, _ = bce_gan_losses(real, fake)
        d_real = (_sigmoid(real) - 1.0) / real.size
        d_fake = _sigmoid(fake) / fake.size
    return loss, d_real.astype(real.dtype), d_fake.astype(fake.dtype)


def g_loss_and_grad(kind: str, fake):
    if kind == "hinge":
        return hinge_g_loss(fake), np.full_like(fake, -1.0 / fake.size)
    _, loss = bce_gan_losses(fake, fake)
    return loss, ((_sigmoid(fake) - 1.0) / fake.size).astype(fake.dtype)


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(param, grad, m, v, lr: float, t: int, beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update, in place. Returns ``(param, m, v)``."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    dt = param.dtype.type
    m *= dt(beta1)
    m += dt(1.0 - beta1) * grad
    v *= dt(beta2)
    scratch = np.multiply(grad, grad)
    scratch *= dt(1.0 - beta2)
    v += scratch
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    # scratch <- sqrt(v / bc2) + eps, then the step m / scratch
    np.multiply(v, dt(1.0 / bc2), out=scratch)
    np.sqrt(scratch, out=scratch)
    scratch += dt(eps)
    np.divide(m, scratch, out=scratch)
    scratch *= dt(lr / bc1)
    param -= scratch
    return param, m, v


def _adam_update(net: Network, state: AdamState, lr: float, beta1: float, beta2: float):
    state.t += 1
    params = net.named_parameters()
    grads = net.named_grads()
    for name in net.trainable_names():
        adam_step(params[name], grads[name], state.m[name], state.v[name], lr, state.t, beta1, beta2)


# ---------------------------------------------------------------- run bookkeeping


@dataclass
class RunArtifacts:
    out_dir: Path
    seed: int
    checkpoints: list[tuple[int, Path]] = field(default_factory=list)
    metrics_log: list[dict] = field(default_factory=list)
    d_log: list[dict] = field(default_factory=list)
    fid_series: RunSeries | None = None
    trainer: "Trainer | None" = None

    @property
    def metrics_path(self) -> Path:
        return self.out_dir / "metrics.csv"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in header])
    return buf.getvalue()


class FidEvaluator:
    """FID of generator outputs on the test sketches against the test photos."""

    def __init__(self, manifest: DatasetManifest, image_size: int, config: EvalConfig):
        samples = manifest.test
        if config.fid_samples:
            samples = samples[: config.fid_samples]
        if len(samples) < 2:
            raise ConfigError("FID needs at least 2 test samples")
        self.sketches = []
        photos = []
        for s in samples:
            sketch, photo = manifest.load_pair(s)
            if sketch.shape[:2] != (image_size, image_size):
                sketch = resize_bilinear(sketch, image_size, image_size)
                photo = resize_bilinear(photo, image_size, image_size)
            self.sketches.append(sketch)
            photos.append(photo)
        if config.extractor == "external":
            self.extractor = ConvFeatureExtractor.from_weights(config.weights)
        else:
            self.extractor = ConvFeatureExtractor.random_projection(config.extractor_seed, config.feature_dim, 3)
        self.real_stats = gaussian_stats(extract_features(photos, self.extractor))

    def generate(self, generator: Network, chunk: int = 16) -> list[np.ndarray]:
        out = []
        for start in range(0, len(self.sketches), chunk):
            batch = images_to_batch(self.sketches[start : start + chunk], generator.dtype)
            out.extend(batch_to_images(generator.forward(batch, Mode(training=False))))
        return out

    def __call__(self, generator: Network) -> dict:
        fake = gaussian_stats(extract_features(self.generate(generator), self.extractor))
        return fid_components(fake, self.real_stats)


class Trainer:
    """Owns both networks, their optimizer state and the update counters."""

    def __init__(self, config: TrainConfig, model: ModelConfig, augment: AugmentParams):
        self.config = config.validate()
        self.model = model
        self.augment = augment
        if augment.crop_to != model.image_size:
            raise ConfigError(f"augment.crop_to ({augment.crop_to}) must equal model.image_size ({model.image_size})")
        g_spec, d_spec = model.specs(config.spectral_norm_target, config.seed)
        self.G = build_network(g_spec)
        self.D = build_network(d_spec)
        self.adam_g = AdamState.zeros_like(self.G.named_parameters())
        self.adam_d = AdamState.zeros_like(self.D.named_parameters())
        self.step = 0  # completed G updates
        self.metrics: list[dict] = []
        self.d_log: list[dict] = []
        self.fid_points: list[tuple[int, float, float]] = []
        self.pairs: list[tuple[np.ndarray, np.ndarray]] = []

    # -- data

    def set_training_pairs(self, pairs):
        if not pairs:
            raise ValueError("training split is empty")
        self.pairs = pairs

    def _batch(self, role: str, counter: int):
        cfg = self.config
        sketches, photos = [], []
        for b in range(cfg.batch_size):
            idx = SplitMix64.from_key(cfg.seed, "sample", role, counter, b).integer(0, len(self.pairs) - 1)
            sketch, photo = self.pairs[idx]
            sk, ph = augment_pair(sketch, photo, self.augment, SplitMix64.from_key(cfg.seed, "augment", role, counter, b))
            sketches.append(sk)
            photos.append(ph)
        return images_to_batch(sketches), images_to_batch(photos)

    def _mode(self, role: str, counter: int) -> Mode:
        return Mode(training=True, rng=SplitMix64.from_key(self.config.seed, "dropout", role, counter))

    # -- updates

    def d_update(self, counter: int) -> tuple[float, float]:
        cfg = self.config
        sk, ph = self._batch("d", counter)
        fake = self.G.forward(sk, self._mode("d", counter))
        n = sk.shape[0]
        pairs = np.concatenate([np.concatenate([sk, ph], axis=1), np.concatenate([sk, fake], axis=1)], axis=0)
        scores = self.D.forward(pairs, Mode(training=True))
        loss, d_real, d_fake = d_loss_and_grads(cfg.loss_kind, scores[:n], scores[n:])
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"non-finite discriminator loss {loss} at D update {counter} (G step {self.step})")
        lr = learning_rate(cfg.lr_policy, counter, cfg.d_lr_interval, cfg.lr_step_size)
        self.D.zero_grad()
        self.D.backward(np.concatenate([d_real, d_fake], axis=0))
        _adam_update(self.D, self.adam_d, lr, cfg.adam_beta1, cfg.adam_beta2)
        return loss, lr

    def g_update(self, counter: int) -> tuple[float, float, float]:
        cfg = self.config
        sk, ph = self._batch("g", counter)
        fake = self.G.forward(sk, self._mode("g", counter))
        scores = self.D.forward(np.concatenate([sk, fake], axis=1), Mode(training=True))
        adv, d_scores = g_loss_and_grad(cfg.loss_kind, scores)
        l1 = l1_loss(fake, ph)
        if not (math.isfinite(adv) and math.isfinite(l1)):
            raise TrainingDivergedError(f"non-finite generator loss at G step {counter}: adversarial={adv}, l1={l1}")
        self.D.zero_grad()
        d_input = self.D.backward(d_scores)
        d_fake = d_input[:, sk.shape[1] :]
        d_l1 = (np.sign(fake - ph) * (cfg.lambda_l1 / fake.size)).astype(fake.dtype)
        lr = learning_rate(cfg.lr_policy, counter, cfg.g_lr_interval, cfg.lr_step_size)
        self.G.zero_grad()
        self.G.backward(d_fake + d_l1)
        _adam_update(self.G, self.adam_g, lr, cfg.adam_beta1, cfg.adam_beta2)
        return adv, l1, lr

    def train_step(self):
        """One G step: k discriminator updates, then one generator update."""
        cfg = self.config
        s = self.step
        k = cfg.d_steps_per_g_step
        d_losses = []
        d_lr = 0.0
        for j in range(k):
            c = s * k + j
            loss, d_lr = self.d_update(c)
            d_losses.append(loss)
            self.d_log.append({"d_step": c, "g_step": s, "d_loss": loss, "d_lr": d_lr})
        adv, l1, g_lr = self.g_update(s)
        d_mean = float(sum(d_losses) / len(d_losses))
        self.metrics.append({"step": s, "d_loss": d_mean, "g_adv_loss": adv, "g_l1_loss": l1, "g_lr": g_lr, "d_lr": d_lr})
        self.step += 1

    @property
    def d_updates(self) -> int:
        return self.step * self.config.d_steps_per_g_step

    # -- checkpoints

    def state_tensors(self) -> dict[str, np.ndarray]:
        tensors = {}
        for prefix, net, adam in (("G", self.G, self.adam_g), ("D", self.D, self.adam_d)):
            for name, value in net.state_dict().items():
                tensors[f"{prefix}/{name}"] = value
            for name in adam.m:
                tensors[f"{prefix}.adam_m/{name}"] = adam.m[name]
                tensors[f"{prefix}.adam_v/{name}"] = adam.v[name]
        return tensors

    def save(self, path: Path, extra: dict | None = None) -> Path:
        meta = {
            "kind": "sketchloom_run",
            "specs": {"G": self.G.spec.to_dict(), "D": self.D.spec.to_dict()},
            "step": self.step,
            "adam_t": {"G": self.adam_g.t, "D": self.adam_d.t},
            "rng_cursor": {"seed": self.config.seed, "g_updates": self.step, "d_updates": self.d_updates},
            "history": {"metrics": self.metrics, "d_steps": self.d_log, "fid": [list(p) for p in self.fid_points]},
        }
        meta.update(extra or {})
        return save_checkpoint(path, self.state_tensors(), meta)

    def restore(self, meta: dict, tensors: dict[str, np.ndarray]):
        for prefix, net, adam in (("G", self.G, self.adam_g), ("D", self.D, self.adam_d)):
            spec = NetworkSpec.from_dict(meta["specs"][prefix])
            if spec != net.spec:
                raise ConfigError(f"checkpoint {prefix} spec {spec} does not match configured {net.spec}")
            net.load_state_dict({n[len(prefix) + 1 :]: v for n, v in tensors.items() if n.startswith(prefix + "/")})
            for name in adam.m:
                adam.m[name][...] = tensors[f"{prefix}.adam_m/{name}"]
                adam.v[name][...] = tensors[f"{prefix}.adam_v/{name}"]
        self.adam_g.t = int(meta["adam_t"]["G"])
        self.adam_d.t = int(meta["adam_t"]["D"])
        self.step = int(meta["step"])
        history = meta.get("history", {})
        self.metrics = [dict(r) for r in history.get("metrics", [])]
        self.d_log = [dict(r) for r in history.get("d_steps", [])]
        self.fid_points = [tuple(p) for p in history.get("fid", [])]


def load_generator(path: str | Path) -> tuple[Network, dict]:
    """Generator network (and checkpoint metadata) from a run checkpoint."""
    meta, tensors = load_checkpoint(path)
    spec = NetworkSpec.from_dict(meta["specs"]["G"])
    net = build_network(spec)
    net.load_state_dict({n[2:]: v for n, v in tensors.items() if n.startswith("G/")})
    return net, meta


def _write_logs(trainer: Trainer, out_dir: Path, seed: int):
    (out_dir / "metrics.csv").write_text(_csv_text(METRICS_HEADER, trainer.metrics))
    (out_dir / "d_steps.csv").write_text(_csv_text(D_STEPS_HEADER, trainer.d_log))
    series = RunSeries(seed)
    for stage, value, raw in trainer.fid_points:
        series.add(stage, value, raw)
    series.save(out_dir / "fid_series.json")
    return series


def train(
    config: TrainConfig | ConfigFile,
    manifest: DatasetManifest,
    out_dir: str | Path,
    model: ModelConfig | None = None,
    augment: AugmentParams | None = None,
    evaluation: EvalConfig | None = None,
    resume: str | Path | None = None,
    stop_at: int | None = None,
) -> RunArtifacts:
    """Run (or resume) training and write its artifacts under ``out_dir``.

    ``config`` may be a bare :class:`TrainConfig` (other sections default) or
    a whole :class:`ConfigFile`. ``stop_at`` ends the run early after that
    many G steps, leaving a checkpoint to resume from.
    """
    if isinstance(config, ConfigFile):
        full = config
    else:
        full = ConfigFile(train=config)
        if model is not None:
            full.model = model
        if augment is not None:
            full.augment = augment
        if evaluation is not None:
            full.eval = evaluation
    full.validate()
    cfg = full.train
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(full.dumps())

    trainer = Trainer(cfg, full.model, full.augment)
    pairs = [manifest.load_pair(s) for s in manifest.train]
    if not pairs:
        raise ValueError("manifest has no training samples")
    trainer.set_training_pairs(pairs)
    evaluator = FidEvaluator(manifest, full.model.image_size, full.eval) if len(manifest.test) >= 2 else None

    artifacts = RunArtifacts(out, cfg.seed)
    if resume is not None:
        meta, tensors = load_checkpoint(resume)
        trainer.restore(meta, tensors)
        log.info("resumed from %s at G step %d", resume, trainer.step)

    def evaluate_and_checkpoint(stage: int):
        extra = {"config": full.to_dict()}
        if evaluator is not None and not any(p[0] == stage for p in trainer.fid_points):
            result = evaluator(trainer.G)
            trainer.fid_points.append((stage, result["fid"], result["raw"]))
            log.info("stage %d: FID %.4f", stage, result["fid"])
        path = trainer.save(out / f"ckpt_{stage:06d}.sklm", extra)
        artifacts.checkpoints.append((stage, path))
        _write_logs(trainer, out, cfg.seed)

    end = cfg.total_g_steps if stop_at is None else min(stop_at, cfg.total_g_steps)
    while trainer.step < end:
        if trainer.step % cfg.eval_every == 0:
            evaluate_and_checkpoint(trainer.step)
        trainer.train_step()
    if trainer.step == cfg.total_g_steps or trainer.step % cfg.eval_every == 0:
        evaluate_and_checkpoint(trainer.step)
    elif stop_at is not None:
        path = trainer.save(out / f"ckpt_{trainer.step:06d}.sklm", {"config": full.to_dict()})
        artifacts.checkpoints.append((trainer.step, path))

    artifacts.fid_series = _write_logs(trainer, out, cfg.seed)
    artifacts.metrics_log = trainer.metrics
    artifacts.d_log = trainer.d_log
    artifacts.trainer = trainer
    (out / "run.json").write_text(
        json.dumps(
            {
                "seed": cfg.seed,
                "g_updates": trainer.step,
                "d_updates": trainer.d_updates,
                "checkpoints": [[s, p.name] for s, p in artifacts.checkpoints],
            },
            indent=2,
        )
        + "\n"
    )
    return artifacts
