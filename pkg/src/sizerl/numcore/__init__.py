from .optim import Adam, clip_global_norm, global_grad_norm
from .tensor import (
    Tensor,
    add,
    causal_dconv1d,
    clip,
    concatenate,
    cumsum,
    div,
    exp,
    grad_enabled,
    log,
    matmul,
    mean,
    minimum,
    mul,
    no_grad,
    pow_,
    reshape,
    selective_scan,
    sigmoid,
    silu,
    slice_,
    softplus,
    sub,
    sum_,
    tanh,
    transpose,
)

__all__ = [
    "Adam",
    "Tensor",
    "add",
    "causal_dconv1d",
    "clip",
    "clip_global_norm",
    "concatenate",
    "cumsum",
    "div",
    "exp",
    "global_grad_norm",
    "grad_enabled",
    "log",
    "matmul",
    "mean",
    "minimum",
    "mul",
    "no_grad",
    "pow_",
    "reshape",
    "selective_scan",
    "sigmoid",
    "silu",
    "slice_",
    "softplus",
    "sub",
    "sum_",
    "tanh",
    "transpose",
]
