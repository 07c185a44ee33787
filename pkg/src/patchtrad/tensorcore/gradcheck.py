"""Central finite-difference checks for autodiff gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_gradient(fn: Callable[[], Tensor], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar ``fn()`` w.r.t. every entry of ``x`` (mutated in place, then restored)."""
    grad = np.zeros_like(x.data, dtype=np.float64)
    flat = x.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn().item()
        flat[i] = orig - h
        down = fn().item()
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``; 0 when both vanish."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> list[float]:
    """Compare backward gradients of ``fn()`` against finite differences.

    ``fn`` must rebuild its graph on each call from the given ``inputs``,
    which should be float64 leaves with ``requires_grad=True``. Returns one
    relative error per input.
    """
    for x in inputs:
        x.zero_grad()
    fn().backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]
    return [relative_error(a, numerical_gradient(fn, x, h)) for a, x in zip(analytic, inputs)]
