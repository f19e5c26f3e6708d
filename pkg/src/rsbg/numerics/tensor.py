"""Dense float64 tensors with reverse-mode differentiation.

Every op records its parents and a closure that maps the output gradient to
parent gradients. Node ids grow monotonically, so sorting the reachable set by
id (descending) gives a reverse topological order for ``backward``.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

_ids = itertools.count()


class ShapeError(ValueError):
    """Raised when operand shapes do not agree."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self._id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _reachable(self)
        grads: dict[int, np.ndarray] = {self._id: np.asarray(grad, dtype=np.float64)}
        for node in order:
            g = grads.pop(node._id, None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(parent._id)
                grads[parent._id] = pg if prev is None else prev + pg


def _reachable(root: Tensor) -> list[Tensor]:
    seen: dict[int, Tensor] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if node._id in seen or not node.requires_grad:
            continue
        seen[node._id] = node
        stack.extend(node._parents)
    return sorted(seen.values(), key=lambda n: n._id, reverse=True)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Iterable[Tensor], backward) -> Tensor:
    parents = tuple(parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._parents = parents if out.requires_grad else ()
    out._backward = backward if out.requires_grad else None
    out._id = next(_ids)
    return out


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name}: non-finite input")


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data

    def back(g):
        return (g @ B.T, A.T @ g)

    return _make(A @ B, (a, b), back)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D, got {x.shape}")
    return _make(x.data.T.copy(), (x,), lambda g: (g.T,))


def fully_connected(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``x @ w + b`` with ``b`` added to every row."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"fully_connected: x {x.shape} incompatible with W {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"fully_connected: bias {b.shape} does not match W {w.shape}")
    X, W = x.data, w.data
    out = X @ W
    if b is None:
        return _make(out, (x, w), lambda g: (g @ W.T, X.T @ g))
    out = out + b.data
    return _make(out, (x, w, b), lambda g: (g @ W.T, X.T @ g, g.sum(axis=0)))


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    A, B = a.data, b.data
    return _make(A * B, (a, b), lambda g: (g * B, g * A))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(x.data * c, (x,), lambda g: (g * c,))


def shift(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(x.data + c, (x,), lambda g: (g,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    # exp(-x) overflowing to inf gives the exact limit 0; no cancellation in either tail
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-x.data))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def softplus(x: Tensor) -> Tensor:
    z = x.data
    e = np.exp(-np.abs(z))
    y = np.maximum(z, 0.0) + np.log1p(e)
    s = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(y, (x,), lambda g: (g * s,))


def log(x: Tensor, eps: float = 0.0) -> Tensor:
    z = x.data + eps
    if np.any(z <= 0):
        raise FloatingPointError("log: non-positive argument")
    return _make(np.log(z), (x,), lambda g: (g / z,))


# ---------------------------------------------------------------------------
# shape manipulation


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: empty input")
    ndim = tensors[0].data.ndim
    ax = axis % ndim
    for t in tensors[1:]:
        if t.data.ndim != ndim or any(
            t.shape[d] != tensors[0].shape[d] for d in range(ndim) if d != ax
        ):
            raise ShapeError(
                f"concat: shapes {[t.shape for t in tensors]} disagree off axis {axis}"
            )
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=ax) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tensors, back)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    if x.data.ndim != 2 or not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"slice_cols: bad range [{start}, {stop}) for {x.shape}")
    shape = x.shape

    def back(g):
        out = np.zeros(shape)
        out[:, start:stop] = g
        return (out,)

    return _make(x.data[:, start:stop].copy(), (x,), back)


def take_rows(x: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    shape = x.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _make(x.data[idx].copy(), (x,), back)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    old = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {old} -> {tuple(shape)}") from exc
    return _make(data.copy(), (x,), lambda g: (g.reshape(old),))


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    return _make(np.swapaxes(x.data, a, b).copy(), (x,), lambda g: (np.swapaxes(g, a, b),))


# ---------------------------------------------------------------------------
# reductions and normalizations


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return _make(np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size
    return _make(np.array(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),))


def mean_of(xs: Sequence[Tensor]) -> Tensor:
    """Elementwise mean of same-shape tensors, summed in order then divided, like ``np.mean``."""
    n = len(xs)
    total = xs[0].data.copy()
    for x in xs[1:]:
        total = total + x.data
    return _make(total / n, tuple(xs), lambda g: tuple(g / n for _ in range(n)))


def mean_axis0(x: Tensor) -> Tensor:
    """Average over the leading axis, e.g. (T, N, d) -> (N, d)."""
    n = x.shape[0]
    shape = x.shape
    return _make(x.data.mean(axis=0), (x,), lambda g: (np.broadcast_to(g / n, shape).copy(),))


def softmax_rows(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Row-wise softmax of a 2-D tensor.

    ``mask`` (boolean, same shape) restricts each row's support; masked-out
    entries are exactly zero and receive no gradient. Every row must keep at
    least one entry.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows: expected 2-D, got {x.shape}")
    if np.any(np.isnan(x.data)):
        raise FloatingPointError("softmax_rows: NaN input")
    z = x.data
    if mask is not None:
        if mask.shape != z.shape:
            raise ShapeError(f"softmax_rows: mask {mask.shape} vs input {z.shape}")
        if not np.all(mask.any(axis=1)):
            raise ValueError("softmax_rows: a row is fully masked")
        z = np.where(mask, z, -np.inf)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _make(y, (x,), back)


def normalize_rows(x: Tensor) -> Tensor:
    """Divide each row by its sum. Rows must have a positive sum."""
    if x.data.ndim != 2:
        raise ShapeError(f"normalize_rows: expected 2-D, got {x.shape}")
    s = x.data.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise ValueError("normalize_rows: a row has non-positive total weight")
    y = x.data / s

    def back(g):
        return ((g - (g * y).sum(axis=1, keepdims=True)) / s,)

    return _make(y, (x,), back)


# ---------------------------------------------------------------------------
# convolution (NCHW, stride 1, zero "same" padding, odd square kernels)


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    n, c, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    s = xp.strides
    cols = np.lib.stride_tricks.as_strided(
        xp, shape=(n, c, k, k, h, w), strides=(s[0], s[1], s[2], s[3], s[2], s[3])
    )
    # -> (n*h*w, c*k*k)
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(n * h * w, c * k * k)


def _col2im(cols: np.ndarray, shape, k: int) -> np.ndarray:
    n, c, h, w = shape
    p = k // 2
    cols = cols.reshape(n, h, w, c, k, k)
    out = np.zeros((n, c, h + 2 * p, w + 2 * p))
    for di in range(k):
        for dj in range(k):
            out[:, :, di : di + h, dj : dj + w] += cols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    return out[:, :, p : p + h, p : p + w]


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: expected NCHW input and OCkk kernel, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    o, ci, k, k2 = w.shape
    if ci != c or k != k2 or k % 2 == 0 or b.shape != (o,):
        raise ShapeError(f"conv2d: input {x.shape}, kernel {w.shape}, bias {b.shape}")
    cols = _im2col(x.data, k)
    wm = w.data.reshape(o, -1)
    out = (cols @ wm.T + b.data).reshape(n, h, wd, o).transpose(0, 3, 1, 2)
    xshape = x.shape

    def back(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gw = (gm.T @ cols).reshape(w.shape)
        gx = _col2im(gm @ wm, xshape, k)
        return (gx, gw, gm.sum(axis=0))

    return _make(np.ascontiguousarray(out), (x, w, b), back)


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    n, c, h, w = x.shape
    if h % size or w % size:
        raise ShapeError(f"avg_pool2d: {x.shape} not divisible by {size}")
    out = x.data.reshape(n, c, h // size, size, w // size, size).mean(axis=(3, 5))

    def back(g):
        return (np.repeat(np.repeat(g, size, axis=2), size, axis=3) / (size * size),)

    return _make(out, (x,), back)
