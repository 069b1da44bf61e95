"""
Two transformer blocks over the same tokens
===========================================

Region vectors get a sinusoidal positional code once, then two independent
pre-norm encoder blocks read them. Their outputs are stacked along the token
axis and three learned task queries pool the result.
"""

# %%
import numpy as np

from twoaspect.autodiff import Tensor, no_grad
from twoaspect.interaction import InteractionModule, positional_encoding, task_query_attend

print("PE row 0:", positional_encoding(24, 8)[0])

rng = np.random.default_rng(0)
mod = InteractionModule(n_tokens=24, width=24, n_heads=4, ffn_hidden=1024, rng=rng)
tokens = Tensor(rng.normal(size=(24, 24)))

# %%
with no_grad():
    rep, (a, b) = mod.two_perspective_encode(tokens)
    feats, _ = mod.forward(tokens)
print("overall representation", rep.shape)
print("blocks differ by up to", float(np.abs(a.data - b.data).max()))
print({task: f.shape for task, f in feats.items()})

# %%
# with identical initial weights the two halves coincide
tied = InteractionModule(24, 24, 4, 1024, np.random.default_rng(0), tie_block_init=True)
with no_grad():
    _, (a, b) = tied.two_perspective_encode(tokens)
print("tied init, halves equal:", bool(np.array_equal(a.data, b.data)))

# %%
# a sharp query picks the matching token
pooled, alpha = task_query_attend(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([60.0, 0.0]))
print("query attention weights", alpha.data.round(4), "->", pooled.data.round(4))
