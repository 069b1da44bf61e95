"""Task losses, challenge metrics and label sanitization.

Losses operate on :class:`~twoaspect.autodiff.Tensor` so they can be
differentiated; metrics operate on plain arrays.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence, TypeVar

import numpy as np

from .autodiff import Tensor, getitem, log_softmax, mean, softplus
from .errors import ConfigError, ContractError

N_AUS = 12
N_EXPR = 8
VA_SENTINEL = -5.0
EXPR_SENTINEL = -1
AU_SENTINEL = -1
CCC_EPS = 1e-8

COMPOSITE_FORMULAS = ("default", "mean")

COMPOSITE_NOTE = (
    "composite note: the default formula 0.5*(ccc_v+ccc_a) + f1_expr + f1_au applied to the published "
    "per-task scores (0.41, 0.62, 0.207, 0.385) gives 1.107, not the published overall score of 0.85; "
    "the overall-score formula is unresolved and is selectable via composite_formula"
)


@dataclass(frozen=True)
class FrameLabels:
    valence: float
    arousal: float
    expr: int
    aus: tuple[int, ...]

    @property
    def is_valid(self) -> bool:
        return (
            self.expr != EXPR_SENTINEL
            and self.valence != VA_SENTINEL
            and self.arousal != VA_SENTINEL
            and AU_SENTINEL not in self.aus
        )


T = TypeVar("T")


def sanitize_frames(frames: Iterable[tuple[T, FrameLabels]]) -> list[tuple[T, FrameLabels]]:
    """Drop every frame carrying a sentinel in any of the three label groups."""
    return [(ref, labels) for ref, labels in frames if labels.is_valid]


# -- losses -------------------------------------------------------------------


def au_bce_loss(au_logits: Tensor, au_labels) -> Tensor:
    """Mean binary cross-entropy over AUs (and frames), computed in logit space.

    -(y ln σ(z) + (1-y) ln(1-σ(z))) == softplus(z) - y·z
    """
    labels = np.asarray(au_labels)
    if labels.shape != au_logits.shape:
        raise ContractError(f"AU labels shape {labels.shape} does not match logits {au_logits.shape}")
    if not np.all((labels == 0) | (labels == 1)):
        raise ContractError("AU labels must be 0/1; sanitize sentinel frames first")
    y = Tensor(labels, dtype=au_logits.dtype)
    return mean(softplus(au_logits) - y * au_logits)


def expr_ce_loss(expr_logits: Tensor, expr_labels) -> Tensor:
    """Cross-entropy of the true class, averaged over frames."""
    labels = np.atleast_1d(np.asarray(expr_labels))
    if expr_logits.ndim == 1:
        expr_logits = expr_logits.reshape(1, -1)
    k = expr_logits.shape[-1]
    if labels.shape != expr_logits.shape[:-1]:
        raise ContractError(f"EXPR labels shape {labels.shape} does not match logits {expr_logits.shape}")
    if labels.dtype.kind not in "iu" or np.any(labels < 0) or np.any(labels >= k):
        raise ContractError(f"EXPR labels must be integers in [0, {k - 1}]")
    logp = log_softmax(expr_logits, axis=-1)
    picked = getitem(logp, (np.arange(len(labels)), labels))
    return -mean(picked)


def ccc_tensor(x: Tensor, y, eps: float = CCC_EPS) -> Tensor:
    """Differentiable concordance correlation coefficient with population moments."""
    if not isinstance(y, Tensor):
        y = Tensor(y, dtype=x.dtype)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError(f"ccc needs two 1-d sequences of equal length, got {x.shape} and {y.shape}")
    if x.shape[0] < 2:
        raise ContractError("ccc needs at least 2 values")
    mx, my = mean(x), mean(y)
    xc, yc = x - mx, y - my
    cov = mean(xc * yc)
    vx, vy = mean(xc * xc), mean(yc * yc)
    return 2.0 * cov / (vx + vy + (mx - my) ** 2 + eps)


def ccc(x, y, eps: float = CCC_EPS) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError(f"ccc needs two 1-d sequences of equal length, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise ContractError("ccc needs at least 2 values")
    mx, my = x.mean(), y.mean()
    cov = np.mean((x - mx) * (y - my))
    return float(2.0 * cov / (x.var() + y.var() + (mx - my) ** 2 + eps))


def va_ccc_loss(pred_v: Tensor, pred_a: Tensor, label_v, label_a) -> Tensor:
    return (1.0 - ccc_tensor(pred_v, label_v)) + (1.0 - ccc_tensor(pred_a, label_a))


def total_loss(l_au: Tensor, l_expr: Tensor, l_va: Tensor) -> Tensor:
    return l_au + l_expr + l_va


# -- metrics ------------------------------------------------------------------


def binary_f1(pred, truth) -> float:
    """2TP / (2TP + FP + FN); 0 when there are no positives in either."""
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.shape != truth.shape:
        raise ContractError(f"pred {pred.shape} and truth {truth.shape} differ in shape")
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def confusion_matrix(pred, truth, k: int) -> np.ndarray:
    """``cm[t, p]`` counts frames with true class t predicted as p."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ContractError(f"pred {pred.shape} and truth {truth.shape} differ in shape")
    return np.bincount(truth * k + pred, minlength=k * k).reshape(k, k)


def macro_f1(pred, truth, k: int) -> float:
    """Unweighted mean of one-vs-rest F1 over ``k`` classes; absent classes score 0."""
    cm = confusion_matrix(pred, truth, k)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros(k), where=denom > 0)
    return float(f1.mean())


def composite_metric(ccc_v: float, ccc_a: float, f1_expr: float, f1_au: float, formula: str = "default") -> float:
    va = 0.5 * (ccc_v + ccc_a)
    if formula == "default":
        return va + f1_expr + f1_au
    if formula == "mean":
        return (va + f1_expr + f1_au) / 3.0
    raise ConfigError(f"unknown composite formula {formula!r}; choose from {COMPOSITE_FORMULAS}")


@dataclass
class MetricReport:
    ccc_v: float
    ccc_a: float
    f1_expr_macro: float
    f1_au_mean: float
    per_au_f1: list[float] = field(default_factory=list)
    composite: float = 0.0
    formula: str = "default"

    @classmethod
    def from_components(cls, ccc_v, ccc_a, f1_expr_macro, f1_au_mean, per_au_f1=(), formula="default"):
        return cls(
            float(ccc_v),
            float(ccc_a),
            float(f1_expr_macro),
            float(f1_au_mean),
            [float(x) for x in per_au_f1],
            composite_metric(ccc_v, ccc_a, f1_expr_macro, f1_au_mean, formula),
            formula,
        )

    def flat(self) -> dict[str, float | str]:
        out: dict[str, float | str] = {}
        for key, value in asdict(self).items():
            if key == "per_au_f1":
                out.update({f"f1_au{i + 1}": v for i, v in enumerate(value)})
            else:
                out[key] = value
        return out

    def to_text(self, note: bool = True) -> str:
        lines = [f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}" for k, v in self.flat().items()]
        if note and self.formula == "default":
            lines.append(f"# {COMPOSITE_NOTE}")
        return "\n".join(lines) + "\n"

    def csv_header(self) -> list[str]:
        return list(self.flat().keys())

    def to_csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(
            [f"{v:.6f}" if isinstance(v, float) else v for v in self.flat().values()]
        )
        return buf.getvalue()


def compute_report(
    va_pred: np.ndarray,
    va_true: np.ndarray,
    expr_pred: Sequence[int],
    expr_true: Sequence[int],
    au_pred: np.ndarray,
    au_true: np.ndarray,
    formula: str = "default",
) -> MetricReport:
    """Score predictions: CCC per VA dimension, macro F1 over 8 classes, mean F1 over 12 AUs."""
    va_pred, va_true = np.asarray(va_pred), np.asarray(va_true)
    au_pred, au_true = np.asarray(au_pred), np.asarray(au_true)
    per_au = [binary_f1(au_pred[:, i], au_true[:, i]) for i in range(au_true.shape[1])]
    return MetricReport.from_components(
        ccc(va_pred[:, 0], va_true[:, 0]),
        ccc(va_pred[:, 1], va_true[:, 1]),
        macro_f1(expr_pred, expr_true, N_EXPR),
        float(np.mean(per_au)),
        per_au,
        formula,
    )
