"""
Learned exponential smoothing over frames
=========================================

f_t = (v_t + mu * f_{t-1}) / (1 + mu), with mu = softplus(theta) and a
learned starting state. The bidirectional variant averages a forward pass with
a reverse pass seeded from the last forward value.
"""

# %%
import numpy as np

from twoaspect.autodiff import Tensor, backward, precision
from twoaspect.smoothing import smooth_bidirectional, smooth_sequence

with precision(np.float64):
    v = Tensor([[0.0], [1.0]])
    print("TS :", smooth_sequence(v, Tensor(1.0), Tensor([0.0])).data.ravel())
    print("BTS:", smooth_bidirectional(v, Tensor(1.0), Tensor([0.0])).data.ravel())

# %%
# a noisy step signal, smoothed with increasing mu
rng = np.random.default_rng(1)
signal = np.r_[np.zeros(15), np.ones(15)] + rng.normal(scale=0.3, size=30)
with precision(np.float64):
    for mu in (0.0, 1.0, 4.0):
        out = smooth_sequence(Tensor(signal[:, None]), Tensor(mu), Tensor([0.0])).data.ravel()
        print(f"mu={mu:3.1f}  std of second half = {out[20:].std():.3f}")

# %%
# the start state fades geometrically: d f_t / d f_init = (mu / (1 + mu))^(t + 1)
with precision(np.float64):
    for t in (0, 1, 5):
        f_init = Tensor(np.zeros(1), requires_grad=True)
        backward(smooth_sequence(Tensor(signal[:8, None]), Tensor(2.0), f_init)[t].sum())
        print(t, float(f_init.grad[0]), (2 / 3) ** (t + 1))
