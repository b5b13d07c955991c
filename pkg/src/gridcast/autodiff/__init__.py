from .optim import AdamState, adam_step, sgd_step
from .gradcheck import analytic_grad, grad_check, max_relative_error, numeric_grad
from .tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    debug_mode,
    gelu,
    get_dtype,
    layer_norm,
    matmul,
    mean,
    mse_loss,
    mul,
    precision,
    relu,
    reshape,
    set_default_precision,
    slice_,
    softmax,
    sub,
    sum_,
    transpose,
)

__all__ = [
    "AdamState", "Tape", "analytic_grad", "max_relative_error", "Tensor", "adam_step", "add", "as_tensor", "backward", "concat",
    "debug_mode", "gelu", "get_dtype", "grad_check", "layer_norm", "matmul", "mean", "mse_loss",
    "mul", "numeric_grad", "precision", "relu", "reshape", "set_default_precision", "sgd_step",
    "slice_", "softmax", "sub", "sum_", "transpose",
]
