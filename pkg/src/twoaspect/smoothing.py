"""Trainable exponential temporal smoothing of per-frame task features.

    f_t = (v_t + μ·f_{t-1}) / (1 + μ),   f_{-1} learned,   μ = softplus(θ) > 0
"""

from __future__ import annotations

from typing import Sequence, Sized, TypeVar

import numpy as np

from .autodiff import Tensor, softplus, stack
from .errors import ConfigError, ContractError
from .module import Module

SMOOTHING_MODES = ("TS", "BTS", "none")
MIN_FRAMES = 10

# softplus(THETA_MU_INIT) == 1
THETA_MU_INIT = float(np.log(np.e - 1.0))


def mu_from_theta(theta_mu: Tensor) -> Tensor:
    return softplus(theta_mu)


def _recurrence(rows: Sequence[Tensor], mu: Tensor, start: Tensor) -> list[Tensor]:
    keep = mu / (1.0 + mu)
    take = 1.0 / (1.0 + mu)
    out, f = [], start
    for v_t in rows:
        f = take * v_t + keep * f
        out.append(f)
    return out


def _rows(v: Tensor) -> list[Tensor]:
    if v.ndim != 2:
        raise ContractError(f"expected a (T, D) sequence, got shape {v.shape}")
    return [v[t] for t in range(v.shape[0])]


def smooth_sequence(v: Tensor, mu: Tensor, f_init: Tensor) -> Tensor:
    """Causal smoothing of a (T, D) sequence, seeded with ``f_init``."""
    rows = _rows(v)
    if not rows:
        raise ContractError("cannot smooth an empty sequence")
    return stack(_recurrence(rows, mu, f_init), axis=0)


def smooth_bidirectional(v: Tensor, mu: Tensor, f_init: Tensor) -> Tensor:
    """Mean of a forward pass and a reverse pass.

    The reverse pass starts at the second-to-last frame, seeded with the last
    forward output, so only the forward direction has a learned initial state.
    """
    rows = _rows(v)
    if len(rows) < 2:
        raise ContractError("bidirectional smoothing needs at least 2 frames")
    forward = _recurrence(rows, mu, f_init)
    reverse = _recurrence(rows[-2::-1], mu, forward[-1])[::-1] + [forward[-1]]
    return stack([0.5 * (g + h) for g, h in zip(forward, reverse)], axis=0)


S = TypeVar("S", bound=Sized)


def filter_short_sequences(videos: Sequence[S], min_frames: int = MIN_FRAMES) -> list[S]:
    """Keep videos with at least ``min_frames`` frames, preserving order."""
    return [v for v in videos if len(v) >= min_frames]


class TemporalSmoother(Module):
    def __init__(self, width: int, mode: str = "TS", prefix: str = "smooth"):
        super().__init__(prefix)
        if mode not in SMOOTHING_MODES:
            raise ConfigError(f"smoothing must be one of {SMOOTHING_MODES}, got {mode!r}")
        self.mode = mode
        self.theta_mu = self.add_param("theta_mu", np.array(THETA_MU_INIT))
        self.f_init = self.add_param("f_init", np.zeros(width))

    @property
    def mu(self) -> float:
        return float(np.logaddexp(0.0, float(self.theta_mu.data)))

    def forward(self, v: Tensor) -> Tensor:
        if self.mode == "none":
            return v
        mu = mu_from_theta(self.theta_mu)
        if self.mode == "TS":
            return smooth_sequence(v, mu, self.f_init)
        return smooth_bidirectional(v, mu, self.f_init)
