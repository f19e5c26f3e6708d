"""Central finite-difference checks against the reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

STEP = 1e-5
TOLERANCE = 1e-4
# entries whose gradients are both below this are compared absolutely
FLOOR = 1e-6


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    passed: bool


def numerical_gradient(f: Callable[[], float], arr: np.ndarray, h: float = STEP) -> np.ndarray:
    """d f / d arr by central differences; ``arr`` is perturbed in place and restored."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = FLOOR) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check(loss_fn: Callable[[], Tensor], leaves: Sequence[Tensor], h: float = STEP) -> float:
    """Max relative error between analytic and numeric gradients over ``leaves``.

    ``loss_fn`` rebuilds the graph from the current leaf values and returns a
    scalar tensor.
    """
    for leaf in leaves:
        leaf.grad = None
    loss_fn().backward()
    analytic = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves]
    worst = 0.0
    for leaf, a in zip(leaves, analytic):
        num = numerical_gradient(lambda: float(loss_fn().data), leaf.data, h)
        worst = max(worst, relative_error(a, num))
    return worst
