"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, backward, no_grad

# Relative-error denominator floor. Central differences at h=1e-5 carry ~1e-10
# of roundoff, so gradients that are exactly zero (e.g. key bias under a
# row-shift-invariant softmax) are checked absolutely at tol * 1e-5.
ZERO_FLOOR = 1e-5


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    out = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    with no_grad():
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            fp = float(fn().data)
            flat[k] = orig - h
            fm = float(fn().data)
            flat[k] = orig
            out.reshape(-1)[k] = (fp - fm) / (2.0 * h)
    return out


def analytic_grads(fn: Callable[[], Tensor], inputs: Sequence[Tensor]) -> list[np.ndarray]:
    for t in inputs:
        t.grad = None
    backward(fn())
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]


def rel_error(a: np.ndarray, n: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), ZERO_FLOOR)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check_gradients(
    fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5
) -> dict[int, float]:
    """Return the max relative error per input index."""
    ana = analytic_grads(fn, inputs)
    return {i: rel_error(a, numeric_grad(fn, t, h)) for i, (t, a) in enumerate(zip(inputs, ana))}
