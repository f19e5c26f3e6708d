"""Parameter containers and recurrent cells built on the tensor ops."""

from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class ParamStore:
    """Ordered mapping of parameter name to leaf tensor.

    Names are dotted paths (``decoder.lstm.w_x``) so a whole model
    flattens to one namespace for checkpoints and optimizers.
    """

    def __init__(self, rng: Optional[np.random.Generator] = None):
        self._params: dict[str, Tensor] = {}
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def uniform(self, name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
        bound = 1.0 / math.sqrt(fan_in)
        return self.add(name, self.rng.uniform(-bound, bound, size=shape))

    def linear(self, prefix: str, d_in: int, d_out: int, bias: bool = True) -> None:
        self.uniform(f"{prefix}.w", (d_in, d_out), d_in)
        if bias:
            self.uniform(f"{prefix}.b", (d_out,), d_in)

    def lstm(self, prefix: str, d_in: int, d_h: int) -> None:
        # gate column order: input, forget, output, cell candidate
        self.uniform(f"{prefix}.w_x", (d_in, 4 * d_h), d_h)
        self.uniform(f"{prefix}.w_h", (d_h, 4 * d_h), d_h)
        self.uniform(f"{prefix}.b", (4 * d_h,), d_h)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, v in state.items():
            if v.shape != self._params[k].shape:
                raise ShapeError(f"{k}: checkpoint shape {v.shape} vs model {self._params[k].shape}")
            self._params[k].data = np.array(v, dtype=np.float64)


def linear(x: Tensor, params: ParamStore, prefix: str) -> Tensor:
    b = params[f"{prefix}.b"] if f"{prefix}.b" in params else None
    return T.fully_connected(x, params[f"{prefix}.w"], b)


def lstm_cell(
    x: Tensor, h_prev: Tensor, c_prev: Tensor, w_x: Tensor, w_h: Tensor, b: Tensor
) -> tuple[Tensor, Tensor]:
    """One LSTM step for a batch of rows.

    ``x`` is (n, d_in); ``h_prev`` and ``c_prev`` are (n, d_h).
    """
    d_h = h_prev.shape[1]
    if w_x.shape != (x.shape[1], 4 * d_h) or w_h.shape != (d_h, 4 * d_h) or b.shape != (4 * d_h,):
        raise ShapeError(
            f"lstm_cell: x {x.shape}, h {h_prev.shape}, w_x {w_x.shape}, w_h {w_h.shape}, b {b.shape}"
        )
    if c_prev.shape != h_prev.shape:
        raise ShapeError(f"lstm_cell: c {c_prev.shape} vs h {h_prev.shape}")
    z = T.add(T.fully_connected(x, w_x, b), T.matmul(h_prev, w_h))
    gates = T.sigmoid(T.slice_cols(z, 0, 3 * d_h))
    i = T.slice_cols(gates, 0, d_h)
    f = T.slice_cols(gates, d_h, 2 * d_h)
    o = T.slice_cols(gates, 2 * d_h, 3 * d_h)
    g = T.tanh(T.slice_cols(z, 3 * d_h, 4 * d_h))
    c = T.add(T.mul(f, c_prev), T.mul(i, g))
    h = T.mul(o, T.tanh(c))
    return h, c


def run_lstm(
    xs: list[Tensor], params: ParamStore, prefix: str, h0: Optional[Tensor] = None
) -> tuple[Tensor, Tensor]:
    """Run a cell over ``xs`` in the given order and return the final (h, c)."""
    w_h = params[f"{prefix}.w_h"]
    d_h = w_h.shape[0]
    n = xs[0].shape[0]
    h = h0 if h0 is not None else Tensor(np.zeros((n, d_h)))
    c = Tensor(np.zeros((n, d_h)))
    for x in xs:
        h, c = lstm_cell(x, h, c, params[f"{prefix}.w_x"], w_h, params[f"{prefix}.b"])
    return h, c
