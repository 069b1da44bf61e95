from .adam import Adam, AdamState, adam_step
from .gradcheck import GradCheckReport, grad_check, grad_check_params
from .nn import conv2d, layer_norm, log_softmax, softmax
from .serialize import load_tensor, read_tensor, save_tensor, tensor_from_bytes, tensor_to_bytes, write_tensor
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    default_dtype,
    div,
    exp,
    gelu,
    getitem,
    log,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    power,
    precision,
    relu,
    reshape,
    sigmoid,
    softplus,
    sqrt,
    stack,
    sub,
    swapaxes,
    tanh,
    transpose,
    tsum,
)


class Parameter(Tensor):
    """A named trainable tensor. Names encode ownership, e.g. ``interaction.block0.ffn.w1``."""

    __slots__ = ()

    def __init__(self, name: str, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype, name=name)
