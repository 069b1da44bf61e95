"""
Reverse-mode gradients on numpy arrays
======================================

Build a tiny expression, backpropagate, then confirm the analytic gradient
against central differences.
"""

# %%
import numpy as np

from twoaspect import autodiff as ad
from twoaspect.autodiff import Tensor, backward, grad_check

x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
loss = (x * x).sum()
backward(loss)
print("d/dx sum(x^2) at", x.data, "->", x.grad)

# %%
# matmul by hand: [[1,2],[3,4]] @ [[5,6],[7,8]]
a = Tensor([[1.0, 2.0], [3.0, 4.0]])
b = Tensor([[5.0, 6.0], [7.0, 8.0]])
print((a @ b).data)

# %%
# cross-correlation with a diagonal kernel
img = Tensor([[[1.0, 2.0], [3.0, 4.0]]])
k = Tensor([[[[1.0, 0.0], [0.0, 1.0]]]])
print("conv2d ->", ad.conv2d(img, k).data.ravel())

# %%
# grad_check runs in float64 and reports the worst relative error
rng = np.random.default_rng(0)
print(grad_check(lambda t: ad.sigmoid(t).sum(), rng.normal(size=6)))
w = Tensor(rng.normal(size=(3, 4)), dtype=np.float64)
print(grad_check(lambda t: (ad.layer_norm(t, Tensor(np.ones(4)), Tensor(np.zeros(4))) * w).sum(), rng.normal(size=(3, 4))))

# %%
# ReLU kinks: the probe shrinks its step when +h and -h straddle one
report = grad_check(lambda t: ad.relu(t).sum(), np.array([3e-4, -0.5, 0.8]))
print(report)

# %%
# one Adam step with p=0, g=1, lr=0.1 moves p to about -0.1
new, state = ad.adam_step({"p": np.array(0.0)}, {"p": np.array(1.0)}, ad.AdamState(lr=0.1))
print("after one step:", float(new["p"]), "t =", state.t)
