"""
Joint objective and challenge-style scoring
===========================================
"""

# %%
import numpy as np

from twoaspect.autodiff import Tensor, precision
from twoaspect.objectives import (
    COMPOSITE_NOTE,
    MetricReport,
    au_bce_loss,
    ccc,
    composite_metric,
    expr_ce_loss,
    macro_f1,
    va_ccc_loss,
)

with precision(np.float64):
    print("BCE at logit 0:", au_bce_loss(Tensor(np.zeros((1, 12))), np.ones((1, 12))).item(), np.log(2))
    print("CE, uniform logits:", expr_ce_loss(Tensor(np.zeros((1, 8))), [3]).item(), np.log(8))
    v = np.array([-0.5, 0.0, 0.5])
    print("VA loss for negated labels:", va_ccc_loss(Tensor(-v), Tensor(-v), v, v).item())

# %%
x = np.array([-1.0, -0.5, 0.5, 1.0])
print("ccc(x, x) =", round(ccc(x, x), 6), " ccc(x, -x) =", round(ccc(x, -x), 6))
print("macro F1 example:", macro_f1([0, 1, 1, 1], [0, 0, 1, 1], 2))

# %%
print("composite:", composite_metric(0.41, 0.62, 0.207, 0.385))
print(MetricReport.from_components(0.41, 0.62, 0.207, 0.385).to_text())
assert COMPOSITE_NOTE in MetricReport.from_components(0, 0, 0, 0).to_text()
