"""
Minimal reverse-mode automatic differentiation on numpy arrays.

Provides the Tensor type, the tape, every differentiable op the generator,
discriminator and losses need, and the Adam optimizer.
"""

from .tensor import (
    Function,
    Tape,
    Tensor,
    add,
    backward,
    default_dtype,
    dot,
    flatten,
    get_default_dtype,
    is_grad_enabled,
    matmul,
    mean,
    mul,
    no_grad,
    reshape,
    scale,
    set_default_dtype,
    sub,
    tabs,
    tensor,
    tsum,
)
from .functional import (
    BatchNormState,
    activation,
    batchnorm2d,
    bce,
    conv2d,
    conv_output_size,
    conv_transpose2d,
    leaky_relu,
    relu,
    sigmoid,
    tanh,
)
from .optim import Adam, AdamState, adam_step
from .gradcheck import gradcheck, max_relative_error, numerical_grad

__all__ = [
    "Adam",
    "AdamState",
    "BatchNormState",
    "Function",
    "Tape",
    "Tensor",
    "activation",
    "adam_step",
    "add",
    "backward",
    "batchnorm2d",
    "bce",
    "conv2d",
    "conv_output_size",
    "conv_transpose2d",
    "default_dtype",
    "dot",
    "flatten",
    "get_default_dtype",
    "gradcheck",
    "is_grad_enabled",
    "leaky_relu",
    "matmul",
    "max_relative_error",
    "mean",
    "mul",
    "no_grad",
    "numerical_grad",
    "relu",
    "reshape",
    "scale",
    "set_default_dtype",
    "sigmoid",
    "sub",
    "tabs",
    "tanh",
    "tensor",
    "tsum",
]
