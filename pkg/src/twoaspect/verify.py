"""Gradient-check suites for every differentiable primitive and for the full model loss."""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import GradCheckReport, Tensor, grad_check, grad_check_params
from .interaction import task_query_attend
from .model import ModelConfig, TwoAspectModel
from .objectives import au_bce_loss, ccc_tensor, expr_ce_loss, total_loss, va_ccc_loss
from .roi import attention_pool
from .smoothing import smooth_bidirectional, smooth_sequence


def _away_from_zero(rng: np.random.Generator, shape, low: float = 0.1) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(low, 1.5, size=shape)


def _projected(op: Callable[[Tensor], Tensor], out_shape, rng) -> Callable[[Tensor], Tensor]:
    """Scalarize ``op`` with a fixed random projection so every output entry matters."""
    weights = rng.normal(size=out_shape)

    def f(x: Tensor) -> Tensor:
        y = op(x)
        return (y * Tensor(weights, dtype=y.dtype)).sum()

    return f


def primitive_cases(rng: np.random.Generator) -> Iterator[tuple[str, Callable[[Tensor], Tensor], np.ndarray]]:
    """Yield (name, scalar function, point) for one random draw of every primitive."""
    def const(shape, positive=False):
        arr = rng.uniform(0.5, 2.0, size=shape) if positive else rng.normal(size=shape)
        return Tensor(arr, dtype=np.float64)

    b = const((3, 4))
    yield "add", _projected(lambda x: x + b, (3, 4), rng), rng.normal(size=(3, 4))
    row = const((4,))
    yield "add_broadcast", _projected(lambda x: b + x, (3, 4), rng), rng.normal(size=(4,))
    yield "sub", _projected(lambda x: b - x, (3, 4), rng), rng.normal(size=(3, 4))
    yield "mul", _projected(lambda x: x * b, (3, 4), rng), rng.normal(size=(3, 4))
    yield "mul_broadcast", _projected(lambda x: b * x, (3, 4), rng), rng.normal(size=(3, 1))
    pos = const((3, 4), positive=True)
    yield "div_numerator", _projected(lambda x: x / pos, (3, 4), rng), rng.normal(size=(3, 4))
    yield "div_denominator", _projected(lambda x: b / x, (3, 4), rng), rng.uniform(0.5, 2.0, size=(3, 4))
    yield "neg", _projected(lambda x: -x, (5,), rng), rng.normal(size=5)
    yield "power", _projected(lambda x: x**3.0, (5,), rng), rng.normal(size=5)
    yield "exp", _projected(ad.exp, (5,), rng), rng.normal(size=5)
    yield "log", _projected(ad.log, (5,), rng), rng.uniform(0.5, 2.0, size=5)
    yield "sqrt", _projected(ad.sqrt, (5,), rng), rng.uniform(0.5, 2.0, size=5)
    yield "tanh", _projected(ad.tanh, (5,), rng), rng.normal(size=5)
    yield "sigmoid", _projected(ad.sigmoid, (5,), rng), rng.normal(size=5)
    yield "softplus", _projected(ad.softplus, (5,), rng), rng.normal(size=5) * 3
    yield "relu", _projected(ad.relu, (6,), rng), _away_from_zero(rng, 6)
    yield "gelu", _projected(ad.gelu, (6,), rng), rng.normal(size=6) * 2
    yield "sum_axis", _projected(lambda x: x.sum(axis=1), (3,), rng), rng.normal(size=(3, 4))
    yield "mean_keepdims", _projected(lambda x: x.mean(axis=0, keepdims=True), (1, 4), rng), rng.normal(size=(3, 4))
    yield "reshape", _projected(lambda x: x.reshape(4, 3), (4, 3), rng), rng.normal(size=(3, 4))
    yield "transpose", _projected(lambda x: x.transpose(2, 0, 1), (4, 2, 3), rng), rng.normal(size=(2, 3, 4))
    yield "getitem", _projected(lambda x: x[np.array([0, 2, 2]), 1:], (3, 3), rng), rng.normal(size=(3, 4))
    yield "concat", _projected(lambda x: ad.concat([x, b, x], axis=0), (9, 4), rng), rng.normal(size=(3, 4))
    yield "stack", _projected(lambda x: ad.stack([x, row, x * x], axis=1), (4, 3), rng), rng.normal(size=4)
    mb = const((4, 2))
    yield "matmul_left", _projected(lambda x: x @ mb, (3, 2), rng), rng.normal(size=(3, 4))
    yield "matmul_right", _projected(lambda x: b @ x, (3, 2), rng), rng.normal(size=(4, 2))
    batched = const((2, 4, 3))
    yield "matmul_broadcast", _projected(lambda x: ad.matmul(batched, x), (2, 4, 2), rng), rng.normal(size=(3, 2))
    kern = const((2, 3, 3, 3))
    cbias = const((2,))
    yield "conv2d_input", _projected(lambda x: ad.conv2d(x, kern, cbias, stride=2, padding=1), (2, 3, 3), rng), rng.normal(size=(3, 5, 5))
    image = const((2, 3, 5, 5))
    yield "conv2d_kernels", _projected(lambda k: ad.conv2d(image, k, stride=1, padding=0), (2, 2, 3, 3), rng), rng.normal(size=(2, 3, 3, 3))
    yield "conv2d_bias", _projected(lambda bb: ad.conv2d(image, kern, bb, stride=2, padding=1), (2, 2, 3, 3), rng), rng.normal(size=2)
    yield "softmax", _projected(lambda x: ad.softmax(x, axis=-1), (3, 4), rng), rng.normal(size=(3, 4))
    yield "softmax_axis0", _projected(lambda x: ad.softmax(x, axis=0), (3, 4), rng), rng.normal(size=(3, 4))
    yield "log_softmax", _projected(lambda x: ad.log_softmax(x, axis=-1), (3, 4), rng), rng.normal(size=(3, 4))
    gain, lbias = const((4,)), const((4,))
    yield "layer_norm_x", _projected(lambda x: ad.layer_norm(x, gain, lbias), (3, 4), rng), rng.normal(size=(3, 4))
    xs = const((3, 4))
    yield "layer_norm_gain", _projected(lambda g: ad.layer_norm(xs, g, lbias), (3, 4), rng), rng.normal(size=4)
    yield "layer_norm_bias", _projected(lambda bb: ad.layer_norm(xs, gain, bb), (3, 4), rng), rng.normal(size=4)

    fm = const((2, 3, 2, 2))
    yield "attention_pool_maps", _projected(lambda a: attention_pool(fm, a), (2, 4, 3), rng), rng.uniform(0.1, 0.9, size=(2, 4, 2, 2))
    tokens = const((6, 4))
    yield "query_attend_query", _projected(lambda q: task_query_attend(tokens, q)[0], (4,), rng), rng.normal(size=4)
    qv = const((4,))
    yield "query_attend_tokens", _projected(lambda t: task_query_attend(t, qv)[0], (4,), rng), rng.normal(size=(6, 4))

    seq = const((5, 3))
    f0 = const((3,))
    theta = Tensor(rng.normal(), dtype=np.float64)
    yield "smooth_theta_mu", _projected(lambda th: smooth_sequence(seq, ad.softplus(th), f0), (5, 3), rng), np.array(rng.normal())
    yield "smooth_f_init", _projected(lambda f: smooth_sequence(seq, ad.softplus(theta), f), (5, 3), rng), rng.normal(size=3)
    yield "smooth_input", _projected(lambda v: smooth_sequence(v, ad.softplus(theta), f0), (5, 3), rng), rng.normal(size=(5, 3))
    yield "bts_theta_mu", _projected(lambda th: smooth_bidirectional(seq, ad.softplus(th), f0), (5, 3), rng), np.array(rng.normal())
    yield "bts_f_init", _projected(lambda f: smooth_bidirectional(seq, ad.softplus(theta), f), (5, 3), rng), rng.normal(size=3)

    target = rng.uniform(-1, 1, size=8)
    yield "ccc", lambda x: ccc_tensor(x, target), rng.uniform(-1, 1, size=8)
    la, lv = rng.uniform(-1, 1, size=8), rng.uniform(-1, 1, size=8)
    yield "va_ccc_loss", lambda x: va_ccc_loss(x[:, 0], x[:, 1], lv, la), rng.uniform(-1, 1, size=(8, 2))
    au_labels = rng.integers(0, 2, size=(3, 12))
    yield "au_bce_loss", lambda x: au_bce_loss(x, au_labels), rng.normal(size=(3, 12)) * 2
    expr_labels = rng.integers(0, 8, size=3)
    yield "expr_ce_loss", lambda x: expr_ce_loss(x, expr_labels), rng.normal(size=(3, 8)) * 2


def primitive_grad_suite(n_points: int = 10, tol: float = 1e-4, seed: int = 0) -> dict[str, GradCheckReport]:
    """Check every primitive at ``n_points`` random points; keep the worst report per primitive."""
    rng = np.random.default_rng(seed)
    worst: dict[str, GradCheckReport] = {}
    for _ in range(n_points):
        with ad.precision(np.float64):
            cases = list(primitive_cases(rng))
        for name, f, point in cases:
            report = grad_check(f, point, tol=tol)
            prev = worst.get(name)
            if prev is None or (prev.passed and (not report.passed or report.max_rel_error > prev.max_rel_error)):
                worst[name] = report
    return worst


def micro_batch(config: ModelConfig, n_frames: int = 2, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    s = config.image_size
    return {
        "images": rng.uniform(0.0, 1.0, size=(n_frames, 3, s, s)),
        "aus": rng.integers(0, 2, size=(n_frames, 12)),
        "expr": rng.integers(0, 8, size=n_frames),
        "va": rng.uniform(-1.0, 1.0, size=(n_frames, 2)),
    }


def model_loss_fn(model: TwoAspectModel, batch: dict[str, np.ndarray]) -> Callable[[], Tensor]:
    def loss() -> Tensor:
        images = Tensor(batch["images"], dtype=ad.default_dtype())
        out = model.forward(images)
        va = batch["va"]
        return total_loss(
            au_bce_loss(out.au_logits, batch["aus"]),
            expr_ce_loss(out.expr_logits, batch["expr"]),
            va_ccc_loss(out.va[:, 0], out.va[:, 1], va[:, 0], va[:, 1]),
        )

    return loss


def model_grad_check(config: ModelConfig | None = None, tol: float = 1e-3, n_frames: int = 2,
                     max_entries: int = 3, seed: int = 0) -> GradCheckReport:
    """Gradient check of the joint loss on a micro-batch.

    Every smoothing parameter (θ_μ and f_init) is probed in full; other
    parameters at ``max_entries`` random coordinates each.
    """
    config = config or ModelConfig(seed=seed)
    model = TwoAspectModel(config)
    loss = model_loss_fn(model, micro_batch(config, n_frames, seed))
    params = model.parameters()
    smooth = {k: v for k, v in params.items() if k.startswith("smooth.")}
    rest = {k: v for k, v in params.items() if not k.startswith("smooth.")}
    r1 = grad_check_params(loss, smooth, tol=tol)
    r2 = grad_check_params(loss, rest, tol=tol, max_entries=max_entries, seed=seed)
    worst = r1 if (not r1.passed or r1.max_rel_error >= r2.max_rel_error) else r2
    return GradCheckReport(
        max(r1.max_rel_error, r2.max_rel_error), tol, r1.n_checked + r2.n_checked, worst.location,
        r1.message or r2.message, r1.reduced_steps + r2.reduced_steps,
    )
