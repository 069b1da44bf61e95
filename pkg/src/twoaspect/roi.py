"""Region-of-interest feature extraction.

A small conv+ReLU backbone produces a feature map; three further conv layers
and a sigmoid turn it into one spatial attention map per region; each map
pools the feature map and a region-specific linear encoder maps the pooled
vector to width D.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Tensor, conv2d, matmul, relu, sigmoid, stack
from .errors import ShapeError
from .module import Module


def conv_output_size(size: int, kernel: int = 3, stride: int = 2, padding: int = 1) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def attention_pool(fm: Tensor, att: Tensor) -> Tensor:
    """Attention-weighted spatial average of ``fm`` for each map in ``att``.

    fm: (N, C, H, W), att: (N, U, H, W) -> (N, U, C). Dividing by the map's
    mass makes the result invariant to rescaling a map by a positive factor.
    """
    if fm.shape[0] != att.shape[0] or fm.shape[2:] != att.shape[2:]:
        raise ShapeError(f"feature map {fm.shape} and attention maps {att.shape} disagree")
    n, c, h, w = fm.shape
    u = att.shape[1]
    fm_flat = fm.reshape(n, c, h * w)
    att_flat = att.reshape(n, u, h * w)
    weighted = matmul(att_flat, fm_flat.transpose(0, 2, 1))
    mass = att_flat.sum(axis=-1, keepdims=True)
    return weighted / mass


def region_encode(fm: Tensor, att: Tensor, weights: Sequence[Tensor], biases: Sequence[Tensor]) -> Tensor:
    """Pool per region then apply that region's own encoder: (N, U, D)."""
    pooled = attention_pool(fm, att)
    n, u, c = pooled.shape
    if len(weights) != u or len(biases) != u:
        raise ShapeError(f"{u} attention maps but {len(weights)} region encoders")
    w = stack(weights, axis=0)  # (U, D, C)
    b = stack(biases, axis=0)  # (U, D)
    d = w.shape[1]
    out = matmul(pooled.reshape(n, u, 1, c), w.transpose(0, 2, 1))
    return out.reshape(n, u, d) + b


class ROIExtractor(Module):
    def __init__(self, n_regions: int, width: int, image_size: int, backbone_channels: Sequence[int],
                 rng: np.random.Generator, prefix: str = "roi"):
        super().__init__(prefix)
        self.n_regions = n_regions
        self.width = width
        self.image_size = image_size
        self.backbone_channels = tuple(backbone_channels)

        self.backbone: list[tuple[Tensor, Tensor]] = []
        c_in = 3
        for i, c_out in enumerate(self.backbone_channels):
            w = rng.normal(0.0, np.sqrt(2.0 / (c_in * 9)), size=(c_out, c_in, 3, 3))
            self.backbone.append((self.add_param(f"backbone.{i}.w", w), self.add_param(f"backbone.{i}.b", np.zeros(c_out))))
            c_in = c_out
        c_f = c_in
        self.feature_channels = c_f
        self.feature_size = image_size
        for _ in self.backbone_channels:
            self.feature_size = conv_output_size(self.feature_size)

        hidden = max(c_f // 2, 1)
        att_shapes = [(hidden, c_f, 3), (hidden, hidden, 3), (n_regions, hidden, 1)]
        self.att: list[tuple[Tensor, Tensor]] = []
        for i, (c_out, c_in_, k) in enumerate(att_shapes):
            scale = np.sqrt((2.0 if i < 2 else 1.0) / (c_in_ * k * k))
            w = rng.normal(0.0, scale, size=(c_out, c_in_, k, k))
            self.att.append((self.add_param(f"att.{i}.w", w), self.add_param(f"att.{i}.b", np.zeros(c_out))))

        self.enc_w: list[Tensor] = []
        self.enc_b: list[Tensor] = []
        for u in range(n_regions):
            self.enc_w.append(self.add_param(f"enc.{u}.w", rng.normal(0.0, 1.0 / np.sqrt(c_f), size=(width, c_f))))
            self.enc_b.append(self.add_param(f"enc.{u}.b", np.zeros(width)))

    def backbone_forward(self, images: Tensor) -> Tensor:
        squeeze = images.ndim == 3
        if squeeze:
            images = images.reshape((1,) + images.shape)
        s = self.image_size
        if images.ndim != 4 or images.shape[1:] != (3, s, s):
            raise ShapeError(f"expected images of shape (3, {s}, {s}), got {images.shape[-3:]}")
        x = images
        for w, b in self.backbone:
            x = relu(conv2d(x, w, b, stride=2, padding=1))
        return x.reshape(x.shape[1:]) if squeeze else x

    def attention_map_forward(self, fm: Tensor) -> Tensor:
        squeeze = fm.ndim == 3
        x = fm.reshape((1,) + fm.shape) if squeeze else fm
        (w0, b0), (w1, b1), (w2, b2) = self.att
        x = relu(conv2d(x, w0, b0, padding=1))
        x = relu(conv2d(x, w1, b1, padding=1))
        x = sigmoid(conv2d(x, w2, b2))
        return x.reshape(x.shape[1:]) if squeeze else x

    def region_encode(self, fm: Tensor, att: Tensor) -> Tensor:
        squeeze = fm.ndim == 3
        if squeeze:
            fm = fm.reshape((1,) + fm.shape)
            att = att.reshape((1,) + att.shape)
        out = region_encode(fm, att, self.enc_w, self.enc_b)
        return out.reshape(out.shape[1:]) if squeeze else out

    def forward(self, images: Tensor) -> Tensor:
        fm = self.backbone_forward(images)
        return self.region_encode(fm, self.attention_map_forward(fm))
