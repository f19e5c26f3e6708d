"""Registry of finite-difference gradient checks over every differentiable op.

Each case is a function ``case(rng) -> (loss_fn, leaves)``. ``run_suite``
checks every case for one seed and returns one row per case. The composite
``pipeline`` case builds a small model end to end (encoder, relation
recursion, GCN, decoder, trajectory + relation loss) and, like the bare
relation recursion, checks a seeded sample of entries in every parameter
tensor.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .numerics import ParamStore, Tensor, lstm_cell, ops
from .numerics.gradcheck import STEP, TOLERANCE, numerical_gradient, relative_error

Case = Callable[[np.random.Generator], tuple[Callable[[], Tensor], list[Tensor]]]


def _leaf(rng, *shape, low=None) -> Tensor:
    x = rng.normal(size=shape)
    if low is not None:
        # keep kinked ops away from their kink
        x = np.sign(x) * (np.abs(x) + low)
    return Tensor(x, requires_grad=True)


def _transpose(rng):
    x = _leaf(rng, 3, 4)
    return (lambda: ops.transpose(x)), [x]


def _unary(op, low=None, positive=False):
    def case(rng):
        x = _leaf(rng, 3, 4, low=low)
        if positive:
            x.data = np.abs(x.data) + 0.2
        w = rng.normal(size=(3, 4))
        return (lambda: ops.sum(ops.mul(op(x), Tensor(w)))), [x]

    return case


def _binary(op, shape_a=(3, 4), shape_b=(3, 4)):
    def case(rng):
        a, b = _leaf(rng, *shape_a), _leaf(rng, *shape_b)
        probe = op(a, b)
        w = rng.normal(size=probe.shape)
        return (lambda: ops.sum(ops.mul(op(a, b), Tensor(w)))), [a, b]

    return case


def _with_weights(build):
    # random output weights so every output entry reaches the gradient
    def case(rng):
        fn, leaves = build(rng)
        w = rng.normal(size=fn().shape)
        return (lambda: ops.sum(ops.mul(fn(), Tensor(w)))), leaves

    return case


def _fully_connected(rng):
    x, w, b = _leaf(rng, 3, 4), _leaf(rng, 4, 5), _leaf(rng, 5)
    return (lambda: ops.fully_connected(x, w, b)), [x, w, b]


def _concat(rng):
    a, b = _leaf(rng, 3, 2), _leaf(rng, 3, 4)
    return (lambda: ops.concat([a, b], axis=1)), [a, b]


def _concat0(rng):
    a, b = _leaf(rng, 2, 3), _leaf(rng, 4, 3)
    return (lambda: ops.concat([a, b], axis=0)), [a, b]


def _slice(rng):
    x = _leaf(rng, 3, 6)
    return (lambda: ops.slice_cols(x, 1, 4)), [x]


def _take_rows(rng):
    x = _leaf(rng, 4, 3)
    return (lambda: ops.take_rows(x, [2, 0, 2])), [x]


def _reshape(rng):
    x = _leaf(rng, 2, 6)
    return (lambda: ops.reshape(x, (3, 4))), [x]


def _swapaxes(rng):
    x = _leaf(rng, 2, 3, 4)
    return (lambda: ops.swapaxes(x, 0, 1)), [x]


def _mean_axis0(rng):
    x = _leaf(rng, 3, 2, 4)
    return (lambda: ops.mean_axis0(x)), [x]


def _mean_of(rng):
    xs = [_leaf(rng, 3, 3) for _ in range(3)]
    return (lambda: ops.mean_of(xs)), xs


def _reduce(op):
    def case(rng):
        x = _leaf(rng, 3, 4)
        return (lambda: ops.scale(op(x), 1.7)), [x]

    return case


def _softmax(rng):
    x = _leaf(rng, 4, 4)
    mask = np.ones((4, 4), dtype=bool)
    mask[0, 2:] = False
    mask[3, 0] = False
    return (lambda: ops.softmax_rows(x, mask)), [x]


def _normalize_rows(rng):
    x = Tensor(rng.uniform(0.2, 1.5, size=(3, 4)), requires_grad=True)
    return (lambda: ops.normalize_rows(x)), [x]


def _conv2d(rng):
    x, w, b = _leaf(rng, 2, 2, 5, 5), _leaf(rng, 3, 2, 3, 3), _leaf(rng, 3)
    return (lambda: ops.conv2d(x, w, b)), [x, w, b]


def _avg_pool(rng):
    x = _leaf(rng, 2, 3, 4, 4)
    return (lambda: ops.avg_pool2d(x, 2)), [x]


def _lstm(rng):
    d_in, d_h = 3, 4
    x, h, c = _leaf(rng, 2, d_in), _leaf(rng, 2, d_h), _leaf(rng, 2, d_h)
    w_x, w_h, b = _leaf(rng, d_in, 4 * d_h), _leaf(rng, d_h, 4 * d_h), _leaf(rng, 4 * d_h)

    def fn():
        h2, c2 = lstm_cell(x, h, c, w_x, w_h, b)
        return ops.concat([h2, c2], axis=1)

    return fn, [x, h, c, w_x, w_h, b]


def _relation_loss(rng):
    from .relation import relation_loss

    x = _leaf(rng, 4, 4)
    adj = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=float)
    return (lambda: relation_loss(ops.softmax_rows(x), adj)), [x]


def _pairwise_bce(rng):
    from .relation import pairwise_bce_loss

    logits = [_leaf(rng, 4, 4) for _ in range(3)]
    adj = np.array([[0, 1, 1, 0], [1, 0, 1, 0], [1, 1, 0, 0], [0, 0, 0, 0]], dtype=float)
    return (lambda: pairwise_bce_loss(logits, adj, np.ones((4, 4), dtype=bool))), logits


def _exp_l2(rng):
    from .decoder import Prediction, exp_l2_loss

    coords = _leaf(rng, 3, 8)
    truth = rng.normal(size=(3, 4, 2))
    gamma = float(rng.uniform(2.0, 30.0))
    return (lambda: exp_l2_loss(Prediction(coords, 4), truth, gamma)), [coords]


def _gcn(rng):
    from .gcn import edge_weights, gcn_aggregate

    v = _leaf(rng, 4, 3)
    r = _leaf(rng, 4, 4)
    return (lambda: gcn_aggregate(v, edge_weights(ops.softmax_rows(r), 1.0))), [v, r]


def _relation_recursion(rng):
    from .relation import init_relation_params, recurse

    params = ParamStore(rng)
    init_relation_params(params, 6, 5, 3, 3, hidden=4)
    f0 = Tensor(rng.normal(size=(4, 6)))
    leaves = [p for _, p in params.items()]
    return (lambda: recurse(f0, params, 3).R_a), leaves


PIPELINE_CONFIG = {
    "d_f": 4,
    "data.t_obs": 3,
    "data.t_pred": 2,
    "rsbg.d_feat": 4,
    "rsbg.d_r": 3,
    "rsbg.hidden": 4,
    "gcn.d_g": 4,
    "decoder.d_dec": 5,
}


def _pipeline(rng) -> tuple[Callable[[], Tensor], list[Tensor]]:
    from .config import Config
    from .data.windows import TrajectoryWindow
    from .model import Batch, RSBGModel

    cfg = Config({**PIPELINE_CONFIG, "train.seed": int(rng.integers(0, 2**31))})
    model = RSBGModel(cfg)
    windows = []
    for n, start in ((3, 0), (1, 10)):
        track = np.cumsum(rng.normal(0.3, 0.2, size=(n, 5, 2)), axis=1) + rng.normal(size=(n, 1, 2))
        adj = np.zeros((n, n))
        if n > 1:
            adj[0, 1] = adj[1, 0] = 1.0
        windows.append(TrajectoryWindow(list(range(n)), track[:, :3], track[:, 3:], start, adj))
    batch = Batch.from_windows(windows)
    leaves = [p for _, p in model.params.items()]
    return (lambda: model.losses(batch)[0]), leaves


REGISTRY: dict[str, Case] = {
    "matmul": _binary(ops.matmul, (3, 4), (4, 2)),
    "transpose": _with_weights(_transpose),
    "fully_connected": _with_weights(_fully_connected),
    "add": _binary(ops.add),
    "sub": _binary(ops.sub),
    "mul": _binary(ops.mul),
    "scale": _unary(lambda x: ops.scale(x, -2.5)),
    "shift": _unary(lambda x: ops.shift(x, 0.75)),
    "relu": _unary(ops.relu, low=0.05),
    "tanh": _unary(ops.tanh),
    "sigmoid": _unary(ops.sigmoid),
    "softplus": _unary(ops.softplus),
    "log": _unary(lambda x: ops.log(x, 1e-3), positive=True),
    "concat": _with_weights(_concat),
    "concat_rows": _with_weights(_concat0),
    "slice_cols": _with_weights(_slice),
    "take_rows": _with_weights(_take_rows),
    "reshape": _with_weights(_reshape),
    "swapaxes": _with_weights(_swapaxes),
    "sum": _reduce(ops.sum),
    "mean": _reduce(ops.mean),
    "mean_axis0": _with_weights(_mean_axis0),
    "mean_of": _with_weights(_mean_of),
    "softmax_rows": _with_weights(_softmax),
    "normalize_rows": _with_weights(_normalize_rows),
    "conv2d": _with_weights(_conv2d),
    "avg_pool2d": _with_weights(_avg_pool),
    "lstm_cell": _with_weights(_lstm),
    "relation_loss": _relation_loss,
    "pairwise_bce": _pairwise_bce,
    "exp_l2": _exp_l2,
    "gcn_aggregate": _with_weights(_gcn),
    "relation_recursion": _with_weights(_relation_recursion),
    "pipeline": _pipeline,
}


SAMPLED = frozenset({"relation_recursion", "pipeline"})


@dataclass
class CaseResult:
    name: str
    seed: int
    max_rel_error: float
    passed: bool
    seconds: float


def check_case(case: Case, rng: np.random.Generator, sample: Optional[int] = None) -> float:
    """Max relative error for one case; ``sample`` caps the entries checked per leaf."""
    loss_fn, leaves = case(rng)
    for leaf in leaves:
        leaf.grad = None
    loss_fn().backward()
    worst = 0.0
    for leaf in leaves:
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        if sample is None or leaf.data.size <= sample:
            numeric = numerical_gradient(lambda: float(loss_fn().data), leaf.data, STEP)
            worst = max(worst, relative_error(analytic, numeric))
            continue
        flat = leaf.data.reshape(-1)
        for i in rng.choice(flat.size, size=sample, replace=False):
            old = flat[i]
            flat[i] = old + STEP
            fp = float(loss_fn().data)
            flat[i] = old - STEP
            fm = float(loss_fn().data)
            flat[i] = old
            num = np.array([(fp - fm) / (2 * STEP)])
            worst = max(worst, relative_error(analytic.reshape(-1)[i : i + 1], num))
    return worst


def run_suite(
    seed: int = 0,
    registry: Optional[Mapping[str, Case]] = None,
    tolerance: float = TOLERANCE,
    sample: int = 2,
) -> list[CaseResult]:
    """Check every case for one seed; composite cases check ``sample`` entries per leaf."""
    registry = REGISTRY if registry is None else registry
    rows = []
    for i, (name, case) in enumerate(registry.items()):
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        err = check_case(case, rng, sample if name in SAMPLED else None)
        rows.append(CaseResult(name, seed, err, bool(err < tolerance), time.perf_counter() - t0))
    return rows


def format_table(rows: list[CaseResult]) -> str:
    width = max((len(r.name) for r in rows), default=4)
    lines = [f"{'op':<{width}}  {'seed':>4}  {'max_rel_err':>11}  result"]
    for r in rows:
        lines.append(f"{r.name:<{width}}  {r.seed:>4}  {r.max_rel_error:11.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
