"""Model configuration and the assembled multi-task model."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Tensor, concat, matmul, tanh
from .errors import ConfigError
from .interaction import TASKS, InteractionModule
from .module import Module
from .objectives import COMPOSITE_FORMULAS, N_AUS, N_EXPR
from .roi import ROIExtractor
from .smoothing import SMOOTHING_MODES, TemporalSmoother

HEAD_SIZES = {"au": N_AUS, "expr": N_EXPR, "va": 2}


@dataclass
class ModelConfig:
    U: int = 24
    D: int = 24
    n_heads: int = 4
    ffn_hidden: int = 1024
    image_size: int = 32
    backbone_channels: tuple[int, ...] = (16, 32, 64)
    perspectives: int = 2
    concat_axis: str = "tokens"
    tie_block_init: bool = False
    smoothing: str = "TS"
    lr: float = 1e-4
    epochs: int = 100
    batch_videos: int = 1
    chunk_len: int = 0
    val_fraction: float = 0.2
    min_frames: int = 10
    seed: int = 0
    composite_formula: str = "default"

    def __post_init__(self):
        self.backbone_channels = tuple(int(c) for c in self.backbone_channels)
        self.validate()

    def validate(self) -> None:
        if self.U < 1 or self.D < 1:
            raise ConfigError(f"U and D must be >= 1, got U={self.U}, D={self.D}")
        if self.n_heads < 1 or self.D % self.n_heads:
            raise ConfigError(f"n_heads={self.n_heads} must divide D={self.D}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.perspectives not in (1, 2):
            raise ConfigError("perspectives must be 1 or 2")
        if self.smoothing not in SMOOTHING_MODES:
            raise ConfigError(f"smoothing must be one of {SMOOTHING_MODES}")
        if self.concat_axis not in ("tokens", "features"):
            raise ConfigError("concat_axis must be 'tokens' or 'features'")
        if self.composite_formula not in COMPOSITE_FORMULAS:
            raise ConfigError(f"composite_formula must be one of {COMPOSITE_FORMULAS}")
        if not self.backbone_channels:
            raise ConfigError("backbone needs at least one stage")
        if self.chunk_len and self.chunk_len < self.min_frames:
            raise ConfigError(f"chunk_len must be 0 (whole video) or >= {self.min_frames}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in [0, 1)")
        if self.batch_videos < 1:
            raise ConfigError("batch_videos must be >= 1")

    # flat key=value text, used by config files and checkpoints

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict[str, str], base: "ModelConfig | None" = None) -> "ModelConfig":
        kwargs = dataclasses.asdict(base) if base is not None else {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, types[key], raw)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str, base: "ModelConfig | None" = None) -> "ModelConfig":
        return cls.from_mapping(parse_key_values(text), base)


def parse_key_values(text: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _coerce(key: str, type_name, raw):
    if not isinstance(raw, str):
        return raw
    type_name = str(type_name)
    try:
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
        if type_name == "bool":
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        if type_name.startswith("tuple"):
            return tuple(int(x) for x in raw.split(",") if x)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


@dataclass
class ModelOutput:
    au_logits: Tensor
    expr_logits: Tensor
    va: Tensor
    block_outputs: list[Tensor] = field(default_factory=list)
    task_features: dict[str, Tensor] = field(default_factory=dict)


class TwoAspectModel(Module):
    """ROI extraction -> two-perspective interaction -> per-task smoothing -> heads."""

    def __init__(self, config: ModelConfig):
        super().__init__("")
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.roi = self.add_child(
            ROIExtractor(config.U, config.D, config.image_size, config.backbone_channels, rng)
        )
        self.interaction = self.add_child(
            InteractionModule(
                config.U,
                config.D,
                config.n_heads,
                config.ffn_hidden,
                rng,
                perspectives=config.perspectives,
                concat_axis=config.concat_axis,
                tie_block_init=config.tie_block_init,
            )
        )
        width = self.interaction.query_width
        self.smoothers = {
            task: self.add_child(TemporalSmoother(width, config.smoothing, prefix=f"smooth.{task}")) for task in TASKS
        }
        self.heads = {}
        for task in TASKS:
            w = self.add_param(f"head.{task}.w", rng.normal(0.0, 1.0 / np.sqrt(width), size=(width, HEAD_SIZES[task])))
            b = self.add_param(f"head.{task}.b", np.zeros(HEAD_SIZES[task]))
            self.heads[task] = (w, b)

    def astype(self, dtype) -> "TwoAspectModel":
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def forward(self, images, lengths: Sequence[int] | None = None) -> ModelOutput:
        """Run a batch of frames that forms one or more consecutive videos.

        ``images`` is (N, 3, S, S); ``lengths`` splits N into per-video runs
        (default: a single video). Smoothing runs independently per video.
        """
        if not isinstance(images, Tensor):
            images = Tensor(images, dtype=self.roi.backbone[0][0].dtype)
        n = images.shape[0]
        lengths = [n] if lengths is None else list(lengths)
        if sum(lengths) != n:
            raise ConfigError(f"video lengths {lengths} do not add up to {n} frames")
        regions = self.roi.forward(images)
        features, block_outputs = self.interaction.forward(regions)
        smoothed = {}
        for task, feat in features.items():
            pieces, start = [], 0
            for length in lengths:
                pieces.append(self.smoothers[task].forward(feat[start : start + length]))
                start += length
            smoothed[task] = pieces[0] if len(pieces) == 1 else concat(pieces, axis=0)
        out = {}
        for task, (w, b) in self.heads.items():
            out[task] = matmul(smoothed[task], w) + b
        return ModelOutput(out["au"], out["expr"], tanh(out["va"]), block_outputs, features)
