"""Differentiable operations on :class:`~patchtrad.tensorcore.tensor.Tensor`.

Each function computes its forward value with NumPy and attaches a backward
closure returning one adjoint per input. Broadcasting is limited to what
NumPy's rules give for ``add``/``sub``/``mul``; adjoints are summed back to
the input shape.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import erf

from ..errors import ConfigError, DimensionError
from .tensor import Tensor

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def residual_add(x: Tensor, fx: Tensor) -> Tensor:
    """Skip connection ``x + f(x)``; shapes must match exactly."""
    if x.shape != fx.shape:
        raise DimensionError(f"residual_add: shapes {x.shape} and {fx.shape} differ")
    return add(x, fx)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a Python scalar."""
    c = float(c)

    def backward(g):
        return (g * c,)

    return Tensor._from_op(a.data * a.data.dtype.type(c), (a,), backward, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Tensor-matrix product: ``a[..., N, O] @ b[O, D] -> [..., N, D]``.

    Leading dimensions of ``a`` are flattened into rows, multiplied, then
    restored.
    """
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    lead = a.shape[:-1]
    a2 = a.data.reshape(-1, a.shape[-1])
    out = (a2 @ b.data).reshape(*lead, b.shape[1])

    def backward(g):
        g2 = g.reshape(-1, b.shape[1])
        ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
        gb = a2.T @ g2 if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(out, (a, b), backward, "matmul")


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over identical leading dimensions."""
    if (a.ndim < 3 or a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]
            or a.shape[-1] != b.shape[-2]):
        raise DimensionError(f"bmm: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(a.data @ b.data, (a, b), backward, "bmm")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from None

    def backward(g):
        return (g.reshape(a.shape),)

    return Tensor._from_op(out, (a,), backward, "reshape")


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    """Permute axes (reverses them when ``axes`` is None)."""
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise DimensionError(f"transpose: {axes} is not a permutation of {a.ndim} axes")
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return Tensor._from_op(np.transpose(a.data, axes), (a,), backward, "transpose")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat: empty input")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}; shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._from_op(out, tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return Tensor._from_op(np.asarray(out), (a,), backward, "sum")


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum(a, axis), 1.0 / n)


def softmax_lastdim(x: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(s, (x,), backward, "softmax")


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF written via erf."""
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return Tensor._from_op((x.data * cdf).astype(x.dtype, copy=False), (x,), backward, "gelu")


class RunningStats:
    """Running mean/variance buffers for batch normalization.

    With ``momentum=None`` the buffers hold a cumulative average over every
    batch seen since :meth:`reset`.
    """

    def __init__(self, n_features: int, dtype=np.float32, momentum: float | None = 0.1):
        self.mean = np.zeros(n_features, dtype=dtype)
        self.var = np.ones(n_features, dtype=dtype)
        self.momentum = momentum
        self.count = 0

    def reset(self) -> None:
        self.mean[...] = 0.0
        self.var[...] = 1.0
        self.count = 0

    def update(self, batch_mean: np.ndarray, batch_var_unbiased: np.ndarray) -> None:
        self.count += 1
        m = 1.0 / self.count if self.momentum is None else self.momentum
        self.mean[...] = (1.0 - m) * self.mean + m * batch_mean
        self.var[...] = (1.0 - m) * self.var + m * batch_var_unbiased


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, stats: RunningStats | None,
              training: bool, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalize ``x`` per feature along ``axis``; statistics pool every other axis.

    In training mode batch statistics are used and ``stats`` (if given) is
    updated with momentum. In eval mode ``stats`` supplies mean and variance.
    """
    axis = axis % x.ndim
    c = x.shape[axis]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm: {c} features but gamma {gamma.shape}, beta {beta.shape}")
    moved = np.moveaxis(x.data, axis, -1)
    flat = moved.reshape(-1, c)
    n = flat.shape[0]
    if training:
        mu = flat.mean(axis=0)
        var = flat.var(axis=0)
        if stats is not None:
            stats.update(mu, var * (n / max(n - 1, 1)))
    else:
        if stats is None:
            raise ConfigError("batchnorm: eval mode needs running statistics")
        mu, var = stats.mean, stats.var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (flat - mu) * inv_std
    y = (xhat * gamma.data + beta.data).astype(x.dtype, copy=False)
    out = np.moveaxis(y.reshape(moved.shape), -1, axis)

    def backward(g):
        gf = np.moveaxis(g, axis, -1).reshape(-1, c)
        ggamma = (gf * xhat).sum(axis=0)
        gbeta = gf.sum(axis=0)
        dxhat = gf * gamma.data
        if training:
            gx = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        else:
            gx = dxhat * inv_std
        gx = np.moveaxis(gx.reshape(moved.shape), -1, axis)
        return gx, ggamma, gbeta

    return Tensor._from_op(np.ascontiguousarray(out), (x, gamma, beta), backward, "batchnorm")


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1/(1-p)``; identity in eval mode."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs a seeded generator")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))

    def backward(g):
        return (g * keep,)

    return Tensor._from_op(x.data * keep, (x,), backward, "dropout")


def sum_squared_error(a: Tensor, b: Tensor) -> Tensor:
    """Scalar ``sum((a - b)**2)``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"sum_squared_error: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data

    def backward(g):
        return 2.0 * g * diff, -2.0 * g * diff

    return Tensor._from_op(np.asarray((diff * diff).sum()), (a, b), backward, "sse")
