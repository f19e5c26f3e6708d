"""First-order optimizers over a :class:`ParamStore`."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import ParamStore


class TrainingError(RuntimeError):
    """Non-finite values surfaced during an update."""


@dataclass
class OptimizerState:
    learning_rate: float
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def _check(name: str, grad: np.ndarray) -> None:
    if not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite gradient for parameter {name!r}")


class SGD:
    def __init__(self, params: ParamStore, lr: float = 1e-2):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.params = params
        self.state = OptimizerState(learning_rate=lr)

    def step(self) -> None:
        lr = self.state.learning_rate
        for name, p in self.params.items():
            if p.grad is None:
                continue
            _check(name, p.grad)
            p.data = p.data - lr * p.grad
        self.state.step_count += 1


class Adam:
    def __init__(
        self,
        params: ParamStore,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.params = params
        self.betas = betas
        self.eps = eps
        self.state = OptimizerState(learning_rate=lr)
        for name, p in params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def step(self) -> None:
        b1, b2 = self.betas
        st = self.state
        st.step_count += 1
        t = st.step_count
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            _check(name, g)
            m = st.m[name] = b1 * st.m[name] + (1.0 - b1) * g
            v = st.v[name] = b2 * st.v[name] + (1.0 - b2) * g * g
            p.data = p.data - st.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name: str, params: ParamStore, lr: float):
    if name == "adam":
        return Adam(params, lr=lr)
    if name == "sgd":
        return SGD(params, lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")
