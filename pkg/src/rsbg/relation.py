"""Recursive relation inference and the social behavior graph.

Starting from per-pedestrian features ``F_0`` (mean-centred observed
positions), each depth ``k`` scores ordered pairs in a subject and an object
embedding space, row-normalizes the scores into ``R_k``, and mixes features
along ``R_k`` to get ``F_{k+1}``. The depths are averaged into ``R_a``, which
is supervised against group labels and weights the graph's edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data.windows import TrajectoryWindow, to_relative
from .numerics import ParamStore, ShapeError, Tensor, ops
from .numerics.nn import linear

EPS = 1e-12


@dataclass
class RelationStack:
    F: list[Tensor]
    R: list[Tensor]
    R_a: Tensor
    logits: list[Tensor] = field(default_factory=list)


@dataclass
class SocialGraph:
    """Nodes carry flattened relative trajectories; edges are ``R_a`` off the diagonal."""

    nodes: Tensor  # (N, 2 * t_obs)
    R_a: Tensor  # (N, N)
    mask: Optional[np.ndarray] = None  # (N, N) bool; block structure for batched windows

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    def edges(self) -> dict[tuple[int, int], float]:
        r = self.R_a.data
        allowed = self.mask if self.mask is not None else np.ones(r.shape, dtype=bool)
        return {
            (i, j): float(r[i, j])
            for i in range(self.n)
            for j in range(self.n)
            if i != j and allowed[i, j]
        }


def init_relation_params(
    params: ParamStore, d_in: int, d_feat: int, d_r: int, depth: int, hidden: int = 0
) -> None:
    """``hidden > 0`` gives the subject/object maps one ReLU hidden layer of that width."""
    widths = [d_in] + [d_feat] * (depth - 1)
    for k in range(depth):
        for g in ("g_s", "g_o"):
            if hidden:
                params.linear(f"rsbg.k{k}.{g}.hidden", widths[k], hidden)
                params.linear(f"rsbg.k{k}.{g}", hidden, d_r)
            else:
                params.linear(f"rsbg.k{k}.{g}", widths[k], d_r)
        if k + 1 < depth:
            params.linear(f"rsbg.k{k}.fc", widths[k], widths[k + 1])


def init_f0(window: TrajectoryWindow, pos_scale: float = 1.0) -> np.ndarray:
    """Observed global positions minus the window mean, flattened per pedestrian."""
    obs = window.obs
    centred = (obs - obs.reshape(-1, 2).mean(axis=0)) * pos_scale
    return centred.reshape(window.n, -1)


def node_features(window: TrajectoryWindow, disp_scale: float = 1.0) -> np.ndarray:
    return (to_relative(window.obs) * disp_scale).reshape(window.n, -1)


def _embed(F: Tensor, params: ParamStore, prefix: str) -> Tensor:
    if f"{prefix}.hidden.w" in params:
        F = ops.relu(linear(F, params, f"{prefix}.hidden"))
    return linear(F, params, prefix)


def relation_logits(F: Tensor, params: ParamStore, k: int) -> Tensor:
    """Subject-object scores ``g_s(F) g_o(F)^T`` for depth ``k``."""
    s = _embed(F, params, f"rsbg.k{k}.g_s")
    o = _embed(F, params, f"rsbg.k{k}.g_o")
    return ops.matmul(s, ops.transpose(o))


def relation_step(F: Tensor, params: ParamStore, k: int, mask: Optional[np.ndarray] = None) -> Tensor:
    """``R_k = softmax_rows(g_s(F_k) g_o(F_k)^T)``."""
    return ops.softmax_rows(relation_logits(F, params, k), mask)


def feature_step(F: Tensor, R: Tensor, params: ParamStore, k: int) -> Tensor:
    """``F_{k+1} = fc(F_k + R_k F_k)``."""
    if R.shape != (F.shape[0], F.shape[0]):
        raise ShapeError(f"feature_step: R {R.shape} does not match F {F.shape}")
    return linear(ops.add(F, ops.matmul(R, F)), params, f"rsbg.k{k}.fc")


def recurse(F0: Tensor, params: ParamStore, depth: int, mask: Optional[np.ndarray] = None) -> RelationStack:
    F = [F0]
    R: list[Tensor] = []
    logits: list[Tensor] = []
    for k in range(depth):
        z = relation_logits(F[k], params, k)
        logits.append(z)
        R.append(ops.softmax_rows(z, mask))
        if k + 1 < depth:
            F.append(feature_step(F[k], R[k], params, k))
    return RelationStack(F, R, ops.mean_of(R), logits)


def build_rsbg(
    window: TrajectoryWindow,
    params: ParamStore,
    depth: int = 3,
    pos_scale: float = 1.0,
    disp_scale: float = 1.0,
) -> tuple[RelationStack, SocialGraph]:
    stack = recurse(Tensor(init_f0(window, pos_scale)), params, depth)
    graph = SocialGraph(Tensor(node_features(window, disp_scale)), stack.R_a)
    return stack, graph


def _targets(group_adj: np.ndarray) -> np.ndarray:
    adj = np.asarray(group_adj, dtype=np.float64)
    if not np.all((adj == 0) | (adj == 1)):
        raise ValueError("group adjacency must be binary")
    tgt = adj.copy()
    np.fill_diagonal(tgt, 1.0)
    return tgt / tgt.sum(axis=1, keepdims=True)


def relation_loss(R_a: Tensor, group_adj: np.ndarray, row_weights: Optional[np.ndarray] = None) -> Tensor:
    """Row-wise cross entropy between ``R_a`` and normalized same-group rows.

    Each target row marks the pedestrian's own group (self included) with equal
    mass. ``row_weights`` defaults to 1/N per row; batched callers pass
    1/(N_w * n_windows) so every window counts equally.
    """
    n = R_a.shape[0]
    if group_adj.shape != R_a.shape:
        raise ShapeError(f"relation_loss: R_a {R_a.shape} vs targets {group_adj.shape}")
    w = np.full(n, 1.0 / n) if row_weights is None else np.asarray(row_weights, dtype=np.float64)
    coef = _targets(group_adj) * w[:, None]
    # offset by log(1 + EPS), rounded exactly as in the forward log, so a perfect
    # row scores exactly 0 and the loss stays >= 0
    ce = ops.scale(ops.sum(ops.mul(ops.log(R_a, EPS), Tensor(coef))), -1.0)
    return ops.shift(ce, float(w.sum()) * float(np.log(1.0 + EPS)))


def pairwise_bce_loss(
    logits: list[Tensor],
    group_adj: np.ndarray,
    mask: Optional[np.ndarray] = None,
    row_weights: Optional[np.ndarray] = None,
) -> Tensor:
    """Per-pair binary cross entropy on sigmoid(logits), averaged over depths.

    Off-diagonal pairs only; row ``i`` is weighted by ``row_weights[i] / (N_i - 1)``.
    """
    n = logits[0].shape[0]
    allowed = np.ones((n, n), dtype=bool) if mask is None else mask.copy()
    np.fill_diagonal(allowed, False)
    count = allowed.sum(axis=1)
    w = np.full(n, 1.0 / n) if row_weights is None else np.asarray(row_weights, dtype=np.float64)
    per_row = np.where(count > 0, w / np.maximum(count, 1), 0.0)
    coef = allowed * per_row[:, None] / len(logits)
    y = np.asarray(group_adj, dtype=np.float64)
    total = None
    for z in logits:
        # softplus(z) - y * z  ==  -[y log s(z) + (1 - y) log(1 - s(z))]
        term = ops.sum(ops.mul(ops.sub(ops.softplus(z), ops.mul(z, Tensor(y))), Tensor(coef)))
        total = term if total is None else ops.add(total, term)
    return total


def predicted_adjacency(R_a: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Threshold ``R_a`` at 1/N (N = window size) off the diagonal."""
    n = R_a.shape[0]
    allowed = np.ones((n, n), dtype=bool) if mask is None else mask
    sizes = allowed.sum(axis=1, keepdims=True)
    pred = (R_a > 1.0 / sizes) & allowed
    np.fill_diagonal(pred, False)
    return pred
