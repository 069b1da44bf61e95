"""Synthetic video dataset: generation, on-disk format and loading.

A dataset directory holds ``manifest.csv`` plus, per video, a frames file in
the tensor binary format (T×3×S×S values in [0, 1]) and a labels CSV.

Frames are rendered so every label is recoverable from the pixels: each AU
lights one cell of a 4×4 grid in the green channel, valence shifts the red
level and arousal the blue level. The expression class is the binary code of
the first three AUs. AUs persist across frames with random flips and
valence/arousal follow per-video sinusoids, so neighbouring frames are
correlated the way real video is.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .autodiff import load_tensor, save_tensor
from .errors import ParseError
from .objectives import AU_SENTINEL, EXPR_SENTINEL, N_AUS, VA_SENTINEL, FrameLabels, sanitize_frames
from .smoothing import MIN_FRAMES, filter_short_sequences

LABEL_HEADER = ["video_id", "frame_idx", "valence", "arousal", "expr"] + [f"au{i}" for i in range(1, N_AUS + 1)]
MANIFEST_HEADER = ["video_id", "frame_count", "frames_file", "labels_file"]


@dataclass
class Video:
    video_id: str
    frames: np.ndarray
    frame_idx: np.ndarray
    labels: list[FrameLabels]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def va(self) -> np.ndarray:
        return np.array([[lab.valence, lab.arousal] for lab in self.labels], dtype=np.float64).reshape(-1, 2)

    @property
    def expr(self) -> np.ndarray:
        return np.array([lab.expr for lab in self.labels], dtype=np.int64)

    @property
    def aus(self) -> np.ndarray:
        return np.array([lab.aus for lab in self.labels], dtype=np.int64).reshape(-1, N_AUS)

    def subset(self, keep: Sequence[int]) -> "Video":
        keep = list(keep)
        return Video(self.video_id, self.frames[keep], self.frame_idx[keep], [self.labels[i] for i in keep])


@dataclass
class ManifestEntry:
    video_id: str
    frame_count: int
    frames_file: Path
    labels_file: Path


@dataclass
class DatasetManifest:
    root: Path
    entries: list[ManifestEntry]

    @property
    def path(self) -> Path:
        return self.root / "manifest.csv"


def expr_from_aus(aus: Sequence[int]) -> int:
    return int(aus[0]) + 2 * int(aus[1]) + 4 * int(aus[2])


def render_frame(aus: Sequence[int], valence: float, arousal: float, size: int, rng: np.random.Generator) -> np.ndarray:
    img = rng.uniform(0.0, 0.08, size=(3, size, size))
    img[0] += 0.45 + 0.3 * valence
    img[2] += 0.45 + 0.3 * arousal
    cell = size // 4
    for i, on in enumerate(aus):
        if on:
            r, c = divmod(i, 4)
            img[1, r * cell : (r + 1) * cell, c * cell : (c + 1) * cell] += 0.8
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synthesize_video(n_frames: int, size: int, rng: np.random.Generator, flip_prob: float = 0.2,
                     sentinel_fraction: float = 0.0) -> tuple[np.ndarray, list[FrameLabels]]:
    aus = rng.integers(0, 2, size=N_AUS)
    periods = rng.uniform(8.0, 32.0, size=2)
    phases = rng.uniform(0.0, 2 * np.pi, size=2)
    amps = rng.uniform(0.5, 0.9, size=2)
    frames, labels = [], []
    for t in range(n_frames):
        if t > 0:
            aus = np.where(rng.random(N_AUS) < flip_prob, 1 - aus, aus)
        v, a = (round(float(x), 4) for x in amps * np.sin(2 * np.pi * t / periods + phases))
        frames.append(render_frame(aus, v, a, size, rng))
        lab = FrameLabels(v, a, expr_from_aus(aus), tuple(int(x) for x in aus))
        if rng.random() < sentinel_fraction:
            group = rng.integers(0, 3)
            if group == 0:
                lab = FrameLabels(lab.valence, lab.arousal, EXPR_SENTINEL, lab.aus)
            elif group == 1:
                lab = FrameLabels(VA_SENTINEL, VA_SENTINEL, lab.expr, lab.aus)
            else:
                lab = FrameLabels(lab.valence, lab.arousal, lab.expr, (AU_SENTINEL,) * N_AUS)
        labels.append(lab)
    return np.stack(frames), labels


def _fmt(x: float) -> str:
    return repr(float(x))


def write_video(root: Path, video: Video) -> ManifestEntry:
    frames_name = f"{video.video_id}.frames.tamt"
    labels_name = f"{video.video_id}.labels.csv"
    save_tensor(root / frames_name, video.frames)
    with open(root / labels_name, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABEL_HEADER)
        for idx, lab in zip(video.frame_idx, video.labels):
            writer.writerow([video.video_id, int(idx), _fmt(lab.valence), _fmt(lab.arousal), lab.expr, *lab.aus])
    return ManifestEntry(video.video_id, len(video), Path(frames_name), Path(labels_name))


def write_dataset(out: str | Path, videos: Iterable[Video]) -> DatasetManifest:
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    entries = [write_video(root, v) for v in videos]
    with open(root / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for e in entries:
            writer.writerow([e.video_id, e.frame_count, e.frames_file.as_posix(), e.labels_file.as_posix()])
    return DatasetManifest(root, entries)


def generate_synthetic(n_videos: int, frames_per_video: int, seed: int, out: str | Path, image_size: int = 32,
                       sentinel_fraction: float = 0.05) -> DatasetManifest:
    """Write a deterministic synthetic dataset and return its manifest."""
    if frames_per_video < 1:
        raise ValueError("frames_per_video must be >= 1")
    rng = np.random.default_rng(seed)
    videos = []
    for i in range(n_videos):
        frames, labels = synthesize_video(frames_per_video, image_size, rng, sentinel_fraction=sentinel_fraction)
        videos.append(Video(f"vid{i:03d}", frames, np.arange(frames_per_video), labels))
    return write_dataset(out, videos)


# -- loading --------------------------------------------------------------------


def _resolve_manifest(path: str | Path) -> Path:
    path = Path(path)
    return path / "manifest.csv" if path.is_dir() else path


def read_manifest(path: str | Path) -> DatasetManifest:
    path = _resolve_manifest(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    root = path.parent
    entries = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise ParseError(f"{path}:1: expected header {','.join(MANIFEST_HEADER)}")
        for lineno, row in enumerate(reader, 2):
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                count = int(row[1])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad frame_count {row[1]!r}") from exc
            entries.append(ManifestEntry(row[0], count, Path(row[2]), Path(row[3])))
    return DatasetManifest(root, entries)


def read_labels(path: Path) -> tuple[list[str], np.ndarray, list[FrameLabels]]:
    ids, idx, labels = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LABEL_HEADER:
            raise ParseError(f"{path}:1: expected header {','.join(LABEL_HEADER)}")
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(LABEL_HEADER):
                raise ParseError(f"{path}:{lineno}: expected {len(LABEL_HEADER)} fields, got {len(row)}")
            try:
                ids.append(row[0])
                idx.append(int(row[1]))
                labels.append(FrameLabels(float(row[2]), float(row[3]), int(row[4]), tuple(int(x) for x in row[5:])))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return ids, np.array(idx, dtype=np.int64), labels


def load_dataset(manifest: str | Path) -> list[Video]:
    """Load every video listed in a manifest. Sentinel labels are kept as-is."""
    man = read_manifest(manifest)
    videos = []
    for entry in man.entries:
        frames_path = man.root / entry.frames_file
        labels_path = man.root / entry.labels_file
        for p in (frames_path, labels_path):
            if not p.exists():
                raise FileNotFoundError(f"missing file for video {entry.video_id}: {p}")
        frames = load_tensor(frames_path)
        ids, idx, labels = read_labels(labels_path)
        if frames.ndim != 4 or frames.shape[1] != 3 or frames.shape[2] != frames.shape[3]:
            raise ParseError(f"{frames_path}: expected T×3×S×S frames, got shape {frames.shape}")
        if not (len(frames) == len(labels) == entry.frame_count):
            raise ParseError(
                f"{entry.video_id}: manifest says {entry.frame_count} frames, "
                f"frames file has {len(frames)}, labels file has {len(labels)}"
            )
        if any(i != entry.video_id for i in ids):
            raise ParseError(f"{labels_path}: rows belong to a different video than {entry.video_id}")
        if np.any(np.diff(idx) <= 0):
            raise ParseError(f"{labels_path}: frame indices must be strictly increasing")
        videos.append(Video(entry.video_id, frames, idx, labels))
    return videos


def sanitize_video(video: Video) -> Video:
    kept = sanitize_frames((i, lab) for i, lab in enumerate(video.labels))
    return video.subset([i for i, _ in kept])


def prepare_videos(videos: Iterable[Video], min_frames: int = MIN_FRAMES) -> list[Video]:
    """Sanitize labels, then drop videos left with fewer than ``min_frames`` frames."""
    return filter_short_sequences([sanitize_video(v) for v in videos], min_frames)


def split_videos(videos: Sequence[Video], val_fraction: float, seed: int) -> tuple[list[Video], list[Video]]:
    """Video-level train/validation split; order within each part follows the input."""
    n_val = int(round(len(videos) * val_fraction))
    if n_val == 0:
        return list(videos), []
    n_val = min(n_val, len(videos) - 1)
    val_ids = set(np.random.default_rng(seed).permutation(len(videos))[:n_val].tolist())
    train = [v for i, v in enumerate(videos) if i not in val_ids]
    val = [v for i, v in enumerate(videos) if i in val_ids]
    return train, val
