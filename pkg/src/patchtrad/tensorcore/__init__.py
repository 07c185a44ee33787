"""Minimal NumPy tensor library with reverse-mode autodiff."""

from .tensor import GradTape, Tensor, default_dtype, get_default_dtype, grad_enabled, no_grad
from .ops import (
    RunningStats,
    add,
    as_tensor,
    batchnorm,
    bmm,
    concat,
    dropout,
    gelu,
    matmul,
    mean,
    mul,
    reshape,
    residual_add,
    scale,
    softmax_lastdim,
    stack,
    sub,
    sum,
    sum_squared_error,
    transpose,
)
from .gradcheck import gradcheck, numerical_gradient, relative_error

__all__ = [
    "GradTape", "Tensor", "default_dtype", "get_default_dtype", "grad_enabled", "no_grad",
    "RunningStats", "add", "as_tensor", "batchnorm", "bmm", "concat", "dropout", "gelu",
    "matmul", "mean", "mul", "reshape", "residual_add", "scale", "softmax_lastdim", "stack",
    "sub", "sum", "sum_squared_error", "transpose",
    "gradcheck", "numerical_gradient", "relative_error",
]
