"""Training loop, validation scoring, crops, and checkpoint averaging."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .errors import ConfigError, InputError, NumericsError
from .model import DiarizationModel
from .optim import Adam
from .scoring import (
    DerReport,
    FileScore,
    InferenceConfig,
    aggregate_der,
    der,
    segments_from_labels,
)


@dataclass
class TrainConfig:
    epochs: int = 10
    lambda_exist: float = 1.0
    optimizer_mode: str = "adam-fixed"
    lr: float = 1e-3
    warmup: int = 1000
    weight_decay: float = 0.0
    crop_frames: int = 500
    batch_size: int = 8
    seed: int = 0
    checkpoint_interval: int = 1
    precision: str = "f32"

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.crop_frames < 1:
            raise ConfigError("crop_frames must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, got {self.precision}")


@dataclass
class EpochMetrics:
    epoch: int
    diar_loss: float
    exist_loss: float
    total: float
    val_der: float


@dataclass
class TrainResult:
    metrics: list[EpochMetrics] = field(default_factory=list)
    checkpoint_paths: list[Path] = field(default_factory=list)
    val_ders: list[float] = field(default_factory=list)


def make_crop(features: np.ndarray, labels: np.ndarray, crop_frames: int, rng):
    """Fixed-length training window; shorter inputs are zero-padded and masked.

    Speakers with no active frame inside the window are dropped from the
    label columns: the window's speaker count drives the existence target,
    and a silent speaker would poison it.
    """
    num_frames = features.shape[1]
    if num_frames >= crop_frames:
        start = int(rng.integers(0, num_frames - crop_frames + 1))
        window = slice(start, start + crop_frames)
        cropped_features = features[:, window]
        cropped_labels = labels[window]
        mask = np.ones(crop_frames)
    else:
        pad = crop_frames - num_frames
        cropped_features = np.concatenate(
            [features, np.zeros((features.shape[0], pad))], axis=1
        )
        cropped_labels = np.concatenate(
            [labels, np.zeros((pad, labels.shape[1]), dtype=labels.dtype)], axis=0
        )
        mask = np.concatenate([np.ones(num_frames), np.zeros(pad)])
    active = cropped_labels.sum(axis=0) > 0
    if active.any() and not active.all():
        cropped_labels = cropped_labels[:, active]
    return cropped_features, cropped_labels, mask


def evaluate(model: DiarizationModel, mixtures, infer_cfg: InferenceConfig):
    """Run inference + scoring over a dataset; same code path as the CLI."""
    scores = []
    count_refs, count_hyps = [], []
    for mix in mixtures:
        labels, s_hat, _ = model.infer(
            mix.features.features,
            diar_threshold=infer_cfg.diar_threshold,
            exist_threshold=infer_cfg.exist_threshold,
        )
        hyp_segments = segments_from_labels(
            _label_matrix(labels, mix.features.frame_shift_s),
            min_segment_s=infer_cfg.min_segment_s,
            recording_id=mix.mixture_id,
        )
        ref_count = len(mix.segments.speakers())
        report = der(mix.segments, hyp_segments, infer_cfg)
        scores.append(FileScore(mix.mixture_id, report, ref_count, s_hat))
        count_refs.append(ref_count)
        count_hyps.append(s_hat)
    return aggregate_der([s.report for s in scores]), scores, (count_refs, count_hyps)


def _label_matrix(labels: np.ndarray, frame_shift_s: float):
    from .features import LabelMatrix

    return LabelMatrix(labels, frame_shift_s)


def train(
    model: DiarizationModel,
    train_mixtures,
    val_mixtures,
    cfg: TrainConfig,
    out_dir,
    infer_cfg: InferenceConfig | None = None,
    log_fn=None,
) -> TrainResult:
    """Optimize the model; one metrics line and (optionally) one checkpoint per epoch.

    Deterministic given the config seed. Aborts with NumericsError if any
    loss turns non-finite.
    """
    if not train_mixtures:
        raise InputError("training set is empty")
    infer_cfg = infer_cfg or InferenceConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(
        model.parameters(),
        lr=cfg.lr,
        mode=cfg.optimizer_mode,
        warmup=cfg.warmup,
        weight_decay=cfg.weight_decay,
    )
    result = TrainResult()
    metrics_path = out_dir / "metrics.tsv"
    lines = ["epoch\tdiar_loss\texist_loss\ttotal\tval_der"]

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = rng.permutation(len(train_mixtures))
        diar_sum = exist_sum = total_sum = 0.0
        pending = 0
        optimizer.zero_grad()
        for position, index in enumerate(order):
            mix = train_mixtures[int(index)]
            features, labels, mask = make_crop(
                mix.features.features, mix.labels.labels, cfg.crop_frames, rng
            )
            out = model.forward_train(
                features,
                labels,
                lambda_exist=cfg.lambda_exist,
                frame_mask=mask if mask.min() < 1 else None,
            )
            total_value = float(out.total.data)
            if not math.isfinite(total_value):
                raise NumericsError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"mixture {mix.mixture_id}"
                )
            out.total.backward()
            diar_sum += float(out.diar_loss.data)
            exist_sum += float(out.exist_loss.data)
            total_sum += total_value
            pending += 1
            if pending == cfg.batch_size or position == len(order) - 1:
                _scale_grads(model, 1.0 / pending)
                optimizer.step()
                optimizer.zero_grad()
                pending = 0

        val_report, _, _ = evaluate(model, val_mixtures, infer_cfg) if val_mixtures else (
            DerReport(math.nan, 0, 0, 0, 0),
            [],
            ([], []),
        )
        n = len(train_mixtures)
        metrics = EpochMetrics(
            epoch=epoch,
            diar_loss=diar_sum / n,
            exist_loss=exist_sum / n,
            total=total_sum / n,
            val_der=val_report.der,
        )
        result.metrics.append(metrics)
        result.val_ders.append(val_report.der)
        lines.append(
            f"{metrics.epoch}\t{metrics.diar_loss:.6f}\t{metrics.exist_loss:.6f}"
            f"\t{metrics.total:.6f}\t{metrics.val_der:.6f}"
        )
        if log_fn:
            log_fn(
                f"epoch {metrics.epoch}: diar {metrics.diar_loss:.4f} "
                f"exist {metrics.exist_loss:.4f} val_der {metrics.val_der:.4f}"
            )
        if cfg.checkpoint_interval and epoch % cfg.checkpoint_interval == 0:
            path = out_dir / f"checkpoint_{epoch:04d}.ckpt"
            checkpoint.save_model(model, path)
            result.checkpoint_paths.append(path)

    metrics_path.write_text("\n".join(lines) + "\n")
    return result


def _scale_grads(model, factor: float) -> None:
    for p in model.parameters():
        p.grad *= factor


def average_checkpoints(paths: list, k: int, scores: list[float]) -> dict[str, np.ndarray]:
    """Parameter-wise mean of the k checkpoints with the lowest scores."""
    if len(paths) != len(scores):
        raise InputError("one score per checkpoint is required")
    if len(paths) < k:
        raise InputError(f"need {k} checkpoints, only {len(paths)} available")
    ranked = sorted(range(len(paths)), key=lambda i: (scores[i], i))[:k]
    states = [checkpoint.load_arrays(paths[i]) for i in ranked]
    averaged = {}
    for name in states[0]:
        averaged[name] = np.mean([state[name] for state in states], axis=0)
    return averaged
