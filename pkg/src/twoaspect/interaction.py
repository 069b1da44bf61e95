"""Two-perspective transformer encoding and per-task query attention."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat, gelu, layer_norm, matmul, softmax
from .errors import ConfigError, ShapeError
from .module import Module

TASKS = ("au", "expr", "va")


def positional_encoding(n_tokens: int, width: int) -> np.ndarray:
    """Sinusoidal table: PE[p, 2i] = sin(p / 10000^(2i/D)), PE[p, 2i+1] = cos(same)."""
    pos = np.arange(n_tokens, dtype=np.float64)[:, None]
    two_i = np.arange(0, width, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, two_i / width)
    pe = np.zeros((n_tokens, width))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : width // 2])
    return pe


def add_positional(tokens: Tensor, table: np.ndarray | None = None) -> Tensor:
    u, d = tokens.shape[-2:]
    if table is None:
        table = positional_encoding(u, d)
    if table.shape != (u, d):
        raise ShapeError(f"positional table {table.shape} does not fit tokens {tokens.shape}")
    return tokens + Tensor(table, dtype=tokens.dtype)


def task_query_attend(rep: Tensor, query: Tensor) -> tuple[Tensor, Tensor]:
    """Attend over the token axis of ``rep`` (…, T, D) with a single query (D,).

    Tokens serve as both keys and values. Returns the pooled (…, D) feature and
    the attention weights (…, T).
    """
    d = rep.shape[-1]
    if query.shape != (d,):
        raise ShapeError(f"query shape {query.shape} does not match token width {d}")
    scores = matmul(rep, query.reshape(d, 1)) * (1.0 / np.sqrt(d))  # (..., T, 1)
    alpha = softmax(scores, axis=-2)
    pooled = (alpha * rep).sum(axis=-2)
    return pooled, alpha.reshape(alpha.shape[:-1])


class TransformerBlock(Module):
    """Pre-norm encoder block: x + MHA(LN(x)), then + FFN(LN(·))."""

    def __init__(self, width: int, n_heads: int, ffn_hidden: int, rng: np.random.Generator, prefix: str,
                 ln_eps: float = 1e-5):
        super().__init__(prefix)
        if width % n_heads:
            raise ConfigError(f"n_heads={n_heads} does not divide width D={width}")
        self.width, self.n_heads, self.ln_eps = width, n_heads, ln_eps
        d = width
        self.ln1_g = self.add_param("ln1.gain", np.ones(d))
        self.ln1_b = self.add_param("ln1.bias", np.zeros(d))
        proj = {}
        for name in ("q", "k", "v", "o"):
            proj[name] = (
                self.add_param(f"attn.w{name}", rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d))),
                self.add_param(f"attn.b{name}", np.zeros(d)),
            )
        self.proj = proj
        self.ln2_g = self.add_param("ln2.gain", np.ones(d))
        self.ln2_b = self.add_param("ln2.bias", np.zeros(d))
        self.w1 = self.add_param("ffn.w1", rng.normal(0.0, np.sqrt(2.0 / d), size=(d, ffn_hidden)))
        self.b1 = self.add_param("ffn.b1", np.zeros(ffn_hidden))
        self.w2 = self.add_param("ffn.w2", rng.normal(0.0, 1.0 / np.sqrt(ffn_hidden), size=(ffn_hidden, d)))
        self.b2 = self.add_param("ffn.b2", np.zeros(d))

    def attention(self, x: Tensor) -> Tensor:
        *lead, u, d = x.shape
        h = self.n_heads
        dh = d // h

        def heads(name):
            w, b = self.proj[name]
            y = matmul(x, w) + b
            return y.reshape(*lead, u, h, dh).transpose(*range(len(lead)), len(lead) + 1, len(lead), len(lead) + 2)

        q, k, v = heads("q"), heads("k"), heads("v")
        nl = len(lead)
        kt = k.transpose(*range(nl + 1), nl + 2, nl + 1)
        weights = softmax(matmul(q, kt) * (1.0 / np.sqrt(dh)), axis=-1)
        ctx = matmul(weights, v)  # (..., H, U, dh)
        ctx = ctx.transpose(*range(nl), nl + 1, nl, nl + 2).reshape(*lead, u, d)
        wo, bo = self.proj["o"]
        return matmul(ctx, wo) + bo

    def feed_forward(self, x: Tensor) -> Tensor:
        return matmul(gelu(matmul(x, self.w1) + self.b1), self.w2) + self.b2

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attention(layer_norm(x, self.ln1_g, self.ln1_b, self.ln_eps))
        return x + self.feed_forward(layer_norm(x, self.ln2_g, self.ln2_b, self.ln_eps))


class InteractionModule(Module):
    def __init__(self, n_tokens: int, width: int, n_heads: int, ffn_hidden: int, rng: np.random.Generator,
                 perspectives: int = 2, concat_axis: str = "tokens", tie_block_init: bool = False,
                 prefix: str = "interaction"):
        super().__init__(prefix)
        if perspectives not in (1, 2):
            raise ConfigError(f"perspectives must be 1 or 2, got {perspectives}")
        if concat_axis not in ("tokens", "features"):
            raise ConfigError(f"concat_axis must be 'tokens' or 'features', got {concat_axis!r}")
        self.n_tokens, self.width = n_tokens, width
        self.perspectives, self.concat_axis = perspectives, concat_axis
        self.pe = positional_encoding(n_tokens, width)
        self.blocks: list[TransformerBlock] = []
        for i in range(perspectives):
            block = TransformerBlock(width, n_heads, ffn_hidden, rng, prefix=f"{prefix}.block{i}")
            if i > 0 and tie_block_init:
                for (_, src), (_, dst) in zip(self.blocks[0].named_parameters(), block.named_parameters()):
                    dst.data = src.data.copy()
            self.blocks.append(self.add_child(block))
        self.query_width = width * (2 if perspectives == 2 and concat_axis == "features" else 1)
        self.queries = {
            task: self.add_param(f"query.{task}", rng.normal(0.0, 1.0, size=self.query_width)) for task in TASKS
        }

    def two_perspective_encode(self, tokens: Tensor) -> tuple[Tensor, list[Tensor]]:
        """Positional-encode once, run each block on the same input, concatenate.

        Returns the overall representation and the individual block outputs.
        """
        x = add_positional(tokens, self.pe)
        outs = [block.forward(x) for block in self.blocks]
        if len(outs) == 1:
            return outs[0], outs
        axis = -2 if self.concat_axis == "tokens" else -1
        return concat(outs, axis=axis), outs

    def forward(self, tokens: Tensor) -> tuple[dict[str, Tensor], list[Tensor]]:
        rep, outs = self.two_perspective_encode(tokens)
        features = {task: task_query_attend(rep, q)[0] for task, q in self.queries.items()}
        return features, outs
