"""The full forecaster: encoder -> relation recursion -> GCN -> decoder.

Several windows are run together by stacking their pedestrians into one
block-diagonal graph: relation softmaxes and GCN weights are masked to each
window's block, so windows never exchange information.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import Config
from .data.windows import TrajectoryWindow, to_relative
from .decoder import Prediction, decode, exp_l2_loss, init_decoder_params
from .encoders import encode_context, encode_trajectory_bilstm, init_context_encoder, init_trajectory_encoder
from .gcn import init_gcn_params, social_features
from .numerics import ParamStore, Tensor, ops
from .relation import (
    RelationStack,
    SocialGraph,
    init_f0,
    init_relation_params,
    node_features,
    pairwise_bce_loss,
    recurse,
    relation_loss,
)

# hyperparameters that fix parameter shapes; stored in checkpoints
ARCH_KEYS = (
    "d_f",
    "encoder.bidirectional",
    "context.enabled",
    "context.d_ctx",
    "context.patch_size",
    "data.t_obs",
    "data.t_pred",
    "data.disp_scale",
    "data.pos_scale",
    "rsbg.enabled",
    "rsbg.depth",
    "rsbg.d_feat",
    "rsbg.d_r",
    "rsbg.hidden",
    "gcn.layers",
    "gcn.d_g",
    "gcn.self_loop",
    "decoder.d_dec",
)


@dataclass
class Batch:
    windows: list[TrajectoryWindow]
    obs: np.ndarray  # (M, t_obs, 2)
    fut: np.ndarray  # (M, t_pred, 2)
    mask: np.ndarray  # (M, M) bool, block diagonal
    group_adj: np.ndarray  # (M, M)
    row_weights: np.ndarray  # (M,) 1 / (N_w * n_windows)
    offsets: np.ndarray  # (n_windows + 1,)

    @classmethod
    def from_windows(cls, windows: Sequence[TrajectoryWindow]) -> "Batch":
        windows = list(windows)
        if not windows:
            raise ValueError("empty batch")
        sizes = [w.n for w in windows]
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        m = int(offsets[-1])
        mask = np.zeros((m, m), dtype=bool)
        adj = np.zeros((m, m))
        weights = np.zeros(m)
        for w, lo, hi in zip(windows, offsets[:-1], offsets[1:]):
            mask[lo:hi, lo:hi] = True
            adj[lo:hi, lo:hi] = w.group_adj
            weights[lo:hi] = 1.0 / (w.n * len(windows))
        return cls(
            windows,
            np.concatenate([w.obs for w in windows]),
            np.concatenate([w.fut for w in windows]),
            mask,
            adj,
            weights,
            offsets,
        )

    def split(self, arr: np.ndarray) -> list[np.ndarray]:
        """Cut a row-stacked array (or block matrix) back into per-window pieces."""
        out = []
        for lo, hi in zip(self.offsets[:-1], self.offsets[1:]):
            out.append(arr[lo:hi, lo:hi] if arr.ndim == 2 and arr.shape == self.mask.shape else arr[lo:hi])
        return out


@dataclass
class Forward:
    prediction: Prediction
    stack: Optional[RelationStack]
    graph: Optional[SocialGraph]
    f: Tensor
    u: Tensor


class RSBGModel:
    def __init__(self, config: Optional[Config] = None, seed: Optional[int] = None):
        self.config = config if config is not None else Config()
        cfg = self.config
        seed = cfg["train.seed"] if seed is None else seed
        self.params = ParamStore(np.random.default_rng(seed))
        t_obs = cfg["data.t_obs"]
        init_trajectory_encoder(self.params, cfg["d_f"], cfg["encoder.bidirectional"])
        if cfg["rsbg.enabled"]:
            init_relation_params(
                self.params,
                2 * t_obs,
                cfg["rsbg.d_feat"],
                cfg["rsbg.d_r"],
                cfg["rsbg.depth"],
                cfg["rsbg.hidden"],
            )
            init_gcn_params(self.params, 2 * t_obs, cfg["gcn.d_g"], cfg["gcn.layers"])
        init_decoder_params(self.params, self.individual_width + cfg["gcn.d_g"], cfg["decoder.d_dec"])
        # context last, so toggling it leaves encoder, relation and GCN initial values unchanged
        if cfg["context.enabled"]:
            init_context_encoder(self.params, cfg["context.d_ctx"], cfg["context.patch_size"])

    @property
    def individual_width(self) -> int:
        cfg = self.config
        return cfg["d_f"] + (cfg["context.d_ctx"] if cfg["context.enabled"] else 0)

    def hyperparameters(self) -> dict:
        full = self.config.to_json()
        return {k: full[k] for k in ARCH_KEYS}

    # ------------------------------------------------------------------

    def individual(self, batch: Batch) -> Tensor:
        cfg = self.config
        disp = to_relative(batch.obs) * cfg["data.disp_scale"]
        f = encode_trajectory_bilstm(disp, self.params)
        if cfg["context.enabled"]:
            if any(w.patches is None for w in batch.windows):
                raise ValueError("context encoder is enabled but a window has no patches")
            patches = np.concatenate([w.patches for w in batch.windows])
            f = ops.concat([f, encode_context(patches, self.params, d_ctx=cfg["context.d_ctx"])], axis=1)
        return f

    def relations(self, batch: Batch) -> tuple[RelationStack, SocialGraph]:
        cfg = self.config
        f0 = np.concatenate([init_f0(w, cfg["data.pos_scale"]) for w in batch.windows])
        nodes = np.concatenate([node_features(w, cfg["data.disp_scale"]) for w in batch.windows])
        stack = recurse(Tensor(f0), self.params, cfg["rsbg.depth"], batch.mask)
        return stack, SocialGraph(Tensor(nodes), stack.R_a, batch.mask)

    def forward(self, batch: Batch, teacher_forcing: Optional[bool] = None) -> Forward:
        cfg = self.config
        f = self.individual(batch)
        stack = graph = None
        if cfg["rsbg.enabled"]:
            stack, graph = self.relations(batch)
            u = social_features(graph, self.params, cfg["gcn.layers"], cfg["gcn.self_loop"])
        else:
            u = Tensor(np.zeros((f.shape[0], cfg["gcn.d_g"])))
        obs = batch.obs
        last_disp = obs[:, -1] - obs[:, -2] if obs.shape[1] > 1 else np.zeros((obs.shape[0], 2))
        tf = cfg["decoder.teacher_forcing"] if teacher_forcing is None else teacher_forcing
        teacher = None
        if tf:
            teacher = np.diff(np.concatenate([obs[:, -1:], batch.fut], axis=1), axis=1)
        pred = decode(f, u, obs[:, -1], last_disp, self.params, cfg["data.t_pred"], cfg["data.disp_scale"], teacher)
        return Forward(pred, stack, graph, f, u)

    def losses(self, batch: Batch, out: Optional[Forward] = None) -> tuple[Tensor, Tensor, Optional[Tensor]]:
        """(total, trajectory term, relation term or None)."""
        cfg = self.config
        out = out if out is not None else self.forward(batch)
        traj = exp_l2_loss(out.prediction, batch.fut, cfg["loss.gamma"], batch.row_weights)
        lam = cfg["rsbg.lambda"]
        if out.stack is None or lam == 0:
            return traj, traj, None
        if cfg["rsbg.loss"] == "row_ce":
            rel = relation_loss(out.stack.R_a, batch.group_adj, batch.row_weights)
        else:
            rel = pairwise_bce_loss(out.stack.logits, batch.group_adj, batch.mask, batch.row_weights)
        return ops.add(traj, ops.scale(rel, lam)), traj, rel

    def predict(self, windows: Sequence[TrajectoryWindow]) -> tuple[list[np.ndarray], list[Optional[np.ndarray]]]:
        """Per-window (N, t_pred, 2) predictions and R_a blocks (None when RSBG is off)."""
        if not windows:
            return [], []
        batch = Batch.from_windows(windows)
        out = self.forward(batch, teacher_forcing=False)
        preds = batch.split(out.prediction.positions)
        if out.stack is None:
            return preds, [None] * len(preds)
        return preds, batch.split(out.stack.R_a.data)
