"""Training, evaluation, prediction and embedding export."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Adam, backward, no_grad
from .checkpoint import Checkpoint, checkpoint_from_model, load_checkpoint, save_checkpoint
from .data import Video, load_dataset, prepare_videos, sanitize_video, split_videos
from .errors import CheckpointError, ConfigError
from .model import ModelConfig, ModelOutput, TwoAspectModel
from .objectives import (
    N_AUS,
    MetricReport,
    au_bce_loss,
    compute_report,
    expr_ce_loss,
    total_loss,
    va_ccc_loss,
)

log = logging.getLogger(__name__)

PREDICTION_HEADER = ["video_id", "frame_idx", "valence", "arousal", "expr"] + [f"au{i}" for i in range(1, N_AUS + 1)]
LOG_METRICS = ("ccc_v", "ccc_a", "f1_expr_macro", "f1_au_mean", "composite")


def batch_loss(model: TwoAspectModel, videos: Sequence[Video]):
    """Joint loss over a group of videos processed as one batch."""
    images = np.concatenate([v.frames for v in videos])
    out = model.forward(images, [len(v) for v in videos])
    aus = np.concatenate([v.aus for v in videos])
    expr = np.concatenate([v.expr for v in videos])
    va = np.concatenate([v.va for v in videos])
    l_au = au_bce_loss(out.au_logits, aus)
    l_expr = expr_ce_loss(out.expr_logits, expr)
    l_va = va_ccc_loss(out.va[:, 0], out.va[:, 1], va[:, 0], va[:, 1])
    return total_loss(l_au, l_expr, l_va), (l_au.item(), l_expr.item(), l_va.item())


def chunk_video(video: Video, chunk_len: int) -> list[Video]:
    if not chunk_len or len(video) < 2 * chunk_len:
        return [video]
    pieces = np.array_split(np.arange(len(video)), len(video) // chunk_len)
    return [video.subset(p) for p in pieces]


@dataclass
class Predictions:
    video_ids: list[str]
    frame_idx: np.ndarray
    va: np.ndarray
    expr: np.ndarray
    aus: np.ndarray
    block_means: list[np.ndarray]


def predict_videos(model: TwoAspectModel, videos: Sequence[Video]) -> Predictions:
    """Inference per video: tanh VA, argmax EXPR, AUs thresholded at probability 0.5."""
    ids, idx, va, expr, aus, blocks = [], [], [], [], [], []
    with no_grad():
        for v in videos:
            out: ModelOutput = model.forward(v.frames)
            ids.extend([v.video_id] * len(v))
            idx.append(v.frame_idx)
            va.append(out.va.data)
            expr.append(out.expr_logits.data.argmax(axis=-1))
            aus.append((out.au_logits.data >= 0).astype(np.int64))
            blocks.append([b.data.mean(axis=-2) for b in out.block_outputs])
    n_blocks = len(blocks[0]) if blocks else 0
    return Predictions(
        ids,
        np.concatenate(idx) if idx else np.zeros(0, np.int64),
        np.concatenate(va) if va else np.zeros((0, 2)),
        np.concatenate(expr) if expr else np.zeros(0, np.int64),
        np.concatenate(aus) if aus else np.zeros((0, N_AUS), np.int64),
        [np.concatenate([b[i] for b in blocks]) for i in range(n_blocks)],
    )


def evaluate_videos(model: TwoAspectModel, videos: Sequence[Video], formula: str | None = None) -> MetricReport:
    if not videos:
        raise ConfigError("nothing to evaluate: no frames with valid labels")
    pred = predict_videos(model, videos)
    va_true = np.concatenate([v.va for v in videos])
    expr_true = np.concatenate([v.expr for v in videos])
    au_true = np.concatenate([v.aus for v in videos])
    return compute_report(pred.va, va_true, pred.expr, expr_true, pred.aus, au_true,
                          formula or model.config.composite_formula)


@dataclass
class TrainResult:
    out_dir: Path
    log_path: Path
    final_checkpoint: Path
    best_checkpoint: Path
    history: list[dict]
    final_report: MetricReport
    best_composite: float


def _write_log(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})


def train(config: ModelConfig, dataset: str | Path, out: str | Path, resume: str | Path | None = None) -> TrainResult:
    """Train end to end and write ``train_log.csv``, ``final.tamc`` and ``best.tamc`` under ``out``.

    Frames with sentinel labels are dropped first, then videos left with fewer
    than ``config.min_frames`` frames. Each optimizer step sees
    ``config.batch_videos`` whole videos (or chunks of ``chunk_len`` frames).
    The best checkpoint tracks the validation composite, or the training
    composite when there is no validation split.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    videos = prepare_videos(load_dataset(dataset), config.min_frames)
    if not videos:
        raise ConfigError(f"no video has >= {config.min_frames} valid frames after sanitization")
    train_videos, val_videos = split_videos(videos, config.val_fraction, config.seed)
    chunks = [c for v in train_videos for c in chunk_video(v, config.chunk_len)]

    model = TwoAspectModel(config)
    opt = Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)
    start_epoch = 0
    if resume is not None:
        ckpt = load_checkpoint(resume)
        model = ckpt.build_model()
        config = model.config
        opt = Adam(model.parameters(), lr=config.lr)
        if ckpt.adam is not None:
            opt.state = ckpt.adam
        if ckpt.rng_state is not None:
            rng.bit_generator.state = ckpt.rng_state
        start_epoch = ckpt.epoch

    history: list[dict] = []
    train_report = None
    best = -np.inf
    final_path, best_path, log_path = out / "final.tamc", out / "best.tamc", out / "train_log.csv"
    for epoch in range(start_epoch + 1, config.epochs + 1):
        order = rng.permutation(len(chunks))
        sums = np.zeros(4)
        n_steps = 0
        for start in range(0, len(order), config.batch_videos):
            group = [chunks[i] for i in order[start : start + config.batch_videos]]
            opt.zero_grad()
            loss, parts = batch_loss(model, group)
            backward(loss)
            opt.step()
            sums += (loss.item(), *parts)
            n_steps += 1
        train_report = evaluate_videos(model, train_videos)
        row = {"epoch": epoch}
        row.update(zip(("loss", "loss_au", "loss_expr", "loss_va"), (float(x) for x in sums / n_steps)))
        row.update({f"train_{k}": getattr(train_report, k) for k in LOG_METRICS})
        score = train_report.composite
        if val_videos:
            val_report = evaluate_videos(model, val_videos)
            row.update({f"val_{k}": getattr(val_report, k) for k in LOG_METRICS})
            score = val_report.composite
        history.append(row)
        log.info("epoch %d loss %.4f composite %.4f", epoch, row["loss"], score)
        if score > best:
            best = score
            save_checkpoint(best_path, checkpoint_from_model(model, epoch, opt.state, rng))
        _write_log(log_path, history)
    if train_report is None:
        train_report = evaluate_videos(model, train_videos)
    save_checkpoint(final_path, checkpoint_from_model(model, config.epochs, opt.state, rng))
    return TrainResult(out, log_path, final_path, best_path, history, train_report, float(best))


def _load_for_inference(checkpoint: str | Path, dataset: str | Path) -> tuple[TwoAspectModel, list[Video]]:
    model = load_checkpoint(checkpoint).build_model()
    videos = load_dataset(dataset)
    size = model.config.image_size
    for v in videos:
        if v.frames.shape[-2:] != (size, size):
            raise CheckpointError(
                f"video {v.video_id} has {v.frames.shape[-1]}px frames, checkpoint expects {size}px"
            )
    return model, videos


def evaluate(checkpoint: str | Path, dataset: str | Path, formula: str | None = None) -> MetricReport:
    """Score a checkpoint on every frame with valid labels."""
    model, videos = _load_for_inference(checkpoint, dataset)
    videos = [v for v in (sanitize_video(v) for v in videos) if len(v)]
    return evaluate_videos(model, videos, formula)


def predict(checkpoint: str | Path, dataset: str | Path, out: str | Path) -> Path:
    """Write one prediction row per frame, sentinel-labelled frames included."""
    model, videos = _load_for_inference(checkpoint, dataset)
    pred = predict_videos(model, videos)
    out = Path(out)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_HEADER)
        for i, vid in enumerate(pred.video_ids):
            writer.writerow(
                [vid, int(pred.frame_idx[i]), f"{pred.va[i, 0]:.6f}", f"{pred.va[i, 1]:.6f}", int(pred.expr[i]),
                 *(int(x) for x in pred.aus[i])]
            )
    return out


def export_embeddings(checkpoint: str | Path, dataset: str | Path, out: str | Path) -> Path:
    """Per frame, one row per transformer block holding that block's token-mean output."""
    model, videos = _load_for_inference(checkpoint, dataset)
    pred = predict_videos(model, videos)
    width = pred.block_means[0].shape[-1]
    out = Path(out)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["video_id", "frame_idx", "block"] + [f"e{j}" for j in range(1, width + 1)])
        for i, vid in enumerate(pred.video_ids):
            for b, means in enumerate(pred.block_means):
                writer.writerow([vid, int(pred.frame_idx[i]), "AB"[b], *(repr(float(x)) for x in means[i])])
    return out


def load_model(checkpoint: str | Path) -> TwoAspectModel:
    return load_checkpoint(checkpoint).build_model()


__all__ = [
    "Checkpoint",
    "TrainResult",
    "batch_loss",
    "evaluate",
    "evaluate_videos",
    "export_embeddings",
    "load_model",
    "predict",
    "predict_videos",
    "train",
]
