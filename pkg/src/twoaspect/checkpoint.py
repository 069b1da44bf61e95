"""Checkpoint file: ``b"TAMC"``, u32 version, config block, metadata block, named tensors.

Blocks are u32 length-prefixed UTF-8 ``key=value`` text. Tensors follow as a
u32 count, then per tensor a u32 length-prefixed name and a TAMT blob.
Adam moments are stored as ``adam.m/<param>`` and ``adam.v/<param>``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .autodiff import AdamState, read_tensor, write_tensor
from .errors import CheckpointError, ParseError
from .model import ModelConfig, TwoAspectModel, parse_key_values

CHECKPOINT_MAGIC = b"TAMC"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    epoch: int = 0
    adam: AdamState | None = None
    rng_state: dict | None = None

    def build_model(self) -> TwoAspectModel:
        model = TwoAspectModel(self.config)
        current = model.parameters()
        if set(current) != set(self.params):
            missing = sorted(set(current) - set(self.params))
            extra = sorted(set(self.params) - set(current))
            raise CheckpointError(f"checkpoint parameters do not match config: missing {missing[:3]}, extra {extra[:3]}")
        for name, p in current.items():
            if p.shape != self.params[name].shape:
                raise CheckpointError(f"{name}: checkpoint shape {self.params[name].shape}, model expects {p.shape}")
            p.data = self.params[name].astype(np.float32).copy()
        return model


def _write_block(fh: BinaryIO, text: str) -> None:
    raw = text.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_block(fh: BinaryIO, path) -> str:
    head = fh.read(4)
    if len(head) != 4:
        raise CheckpointError(f"{path}: truncated checkpoint")
    (n,) = struct.unpack("<I", head)
    raw = fh.read(n)
    if len(raw) != n:
        raise CheckpointError(f"{path}: truncated checkpoint")
    return raw.decode("utf-8")


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    meta = {"epoch": str(ckpt.epoch)}
    tensors = dict(ckpt.params)
    if ckpt.adam is not None:
        a = ckpt.adam
        meta.update(adam_t=str(a.t), adam_lr=repr(a.lr), adam_beta1=repr(a.beta1), adam_beta2=repr(a.beta2),
                    adam_eps=repr(a.eps))
        for name in ckpt.params:
            if name in a.m:
                tensors[f"adam.m/{name}"] = a.m[name]
                tensors[f"adam.v/{name}"] = a.v[name]
    if ckpt.rng_state is not None:
        meta["rng_state"] = json.dumps(ckpt.rng_state, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        _write_block(fh, ckpt.config.to_text())
        _write_block(fh, "".join(f"{k}={v}\n" for k, v in meta.items()))
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            write_tensor(fh, arr)


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        config = ModelConfig.from_text(_read_block(fh, path))
        meta = parse_key_values(_read_block(fh, path))
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            (n,) = struct.unpack("<I", fh.read(4))
            name = fh.read(n).decode("utf-8")
            try:
                tensors[name] = read_tensor(fh, source=f"{path}:{name}")
            except ParseError as exc:
                raise CheckpointError(str(exc)) from exc
    params = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
    adam = None
    if "adam_t" in meta:
        adam = AdamState(
            m={k[len("adam.m/"):]: v for k, v in tensors.items() if k.startswith("adam.m/")},
            v={k[len("adam.v/"):]: v for k, v in tensors.items() if k.startswith("adam.v/")},
            t=int(meta["adam_t"]),
            lr=float(meta["adam_lr"]),
            beta1=float(meta["adam_beta1"]),
            beta2=float(meta["adam_beta2"]),
            eps=float(meta["adam_eps"]),
        )
    rng_state = json.loads(meta["rng_state"]) if "rng_state" in meta else None
    return Checkpoint(config, params, int(meta.get("epoch", 0)), adam, rng_state)


def checkpoint_from_model(model: TwoAspectModel, epoch: int = 0, adam: AdamState | None = None,
                          rng: np.random.Generator | None = None) -> Checkpoint:
    params = {name: p.data.copy() for name, p in model.named_parameters()}
    rng_state = rng.bit_generator.state if rng is not None else None
    return Checkpoint(model.config, params, epoch, adam, rng_state)
