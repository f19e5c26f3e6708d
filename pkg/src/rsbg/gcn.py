"""Weighted graph convolution over the social behavior graph."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .numerics import ParamStore, ShapeError, Tensor, ops
from .numerics.nn import linear
from .relation import SocialGraph


def init_gcn_params(params: ParamStore, d_in: int, d_g: int, layers: int = 2) -> None:
    for m in range(layers):
        params.linear(f"gcn.l{m}", d_in if m == 0 else d_g, d_g)


def edge_weights(R_a: Tensor, self_loop: float = 1.0, mask: Optional[np.ndarray] = None) -> Tensor:
    """Off-diagonal ``R_a`` (restricted to ``mask``) plus ``self_loop`` on the diagonal."""
    n = R_a.shape[0]
    off = np.ones((n, n)) if mask is None else mask.astype(np.float64)
    np.fill_diagonal(off, 0.0)
    return ops.add(ops.mul(R_a, Tensor(off)), Tensor(np.eye(n) * self_loop))


def gcn_aggregate(v: Tensor, weights: Tensor) -> Tensor:
    """``h_i = sum_j w_ij v_j / sum_j w_ij``."""
    if weights.shape != (v.shape[0], v.shape[0]):
        raise ShapeError(f"gcn_aggregate: weights {weights.shape} vs nodes {v.shape}")
    if np.any(weights.data < 0):
        raise ValueError("gcn_aggregate: negative edge weight")
    return ops.matmul(ops.normalize_rows(weights), v)


def gcn_update(h: Tensor, params: ParamStore, layer: int) -> Tensor:
    return ops.relu(linear(h, params, f"gcn.l{layer}"))


def social_features(
    graph: SocialGraph, params: ParamStore, layers: int = 2, self_loop: float = 1.0
) -> Tensor:
    """Run ``layers`` rounds of aggregate + update starting from the node features."""
    w = edge_weights(graph.R_a, self_loop, graph.mask)
    v = graph.nodes
    for m in range(layers):
        v = gcn_update(gcn_aggregate(v, w), params, m)
    return v
