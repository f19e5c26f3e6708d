"""Prediction windows cut from scenes, plus coordinate transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .groups import GroupAnnotation, adjacency
from .tracks import DataError, Scene

T_OBS = 8
T_PRED = 12


@dataclass
class TrajectoryWindow:
    ped_ids: list[int]
    obs: np.ndarray  # (N, t_obs, 2)
    fut: np.ndarray  # (N, t_pred, 2)
    start_frame: int
    group_adj: np.ndarray  # (N, N) 0/1, symmetric, zero diagonal
    scene: str = ""
    annotated: bool = True
    patches: Optional[np.ndarray] = None  # (N, t_obs, C*H*W) when context is used

    def __post_init__(self) -> None:
        n = len(self.ped_ids)
        if n < 1:
            raise DataError("a window needs at least one pedestrian")
        if self.obs.shape[0] != n or self.fut.shape[0] != n or self.group_adj.shape != (n, n):
            raise DataError(
                f"window shapes disagree: {n} peds, obs {self.obs.shape}, fut {self.fut.shape}, "
                f"adj {self.group_adj.shape}"
            )
        adj = self.group_adj
        if np.any(np.diag(adj) != 0) or np.any(adj != adj.T) or not np.all((adj == 0) | (adj == 1)):
            raise DataError("group_adj must be a symmetric 0/1 matrix with zero diagonal")

    @property
    def n(self) -> int:
        return len(self.ped_ids)

    @property
    def window_id(self) -> str:
        return f"{self.scene}:{self.start_frame}"

    def permuted(self, perm: Sequence[int]) -> "TrajectoryWindow":
        perm = np.asarray(perm)
        return TrajectoryWindow(
            [self.ped_ids[i] for i in perm],
            self.obs[perm],
            self.fut[perm],
            self.start_frame,
            self.group_adj[np.ix_(perm, perm)],
            self.scene,
            self.annotated,
            None if self.patches is None else self.patches[perm],
        )


def build_windows(
    scene: Scene,
    ann: Optional[GroupAnnotation] = None,
    t_obs: int = T_OBS,
    t_pred: int = T_PRED,
    stride: int = 1,
) -> list[TrajectoryWindow]:
    """Every start frame (every ``stride`` frames) with at least one fully present pedestrian."""
    if t_obs < 1 or t_pred < 1 or stride < 1:
        raise ValueError("t_obs, t_pred and stride must be >= 1")
    tracks = scene.tracks()
    if not tracks:
        return []
    span = t_obs + t_pred
    fs = scene.frame_stride
    f0 = int(scene.frames.min())
    n_slots = (int(scene.frames.max()) - f0) // fs + 1
    pids = sorted(tracks)
    present = np.zeros((n_slots, len(pids)), dtype=bool)
    xy = np.zeros((n_slots, len(pids), 2))
    for j, pid in enumerate(pids):
        frames, pts = tracks[pid]
        slots = (frames - f0) // fs
        present[slots, j] = True
        xy[slots, j] = pts
    if n_slots < span:
        return []
    csum = np.concatenate([np.zeros((1, len(pids)), dtype=np.int64), np.cumsum(present, axis=0)])
    full = (csum[span:] - csum[:-span]) == span  # (n_slots - span + 1, P)
    out = []
    for s in range(0, full.shape[0], stride):
        cols = np.flatnonzero(full[s])
        if not len(cols):
            continue
        ids = [pids[j] for j in cols]
        seg = xy[s : s + span, cols].transpose(1, 0, 2)
        start = f0 + s * fs
        aw = ann.window_at(start) if ann is not None else None
        adj = adjacency(aw.groups, ids) if aw is not None else np.zeros((len(ids), len(ids)))
        out.append(
            TrajectoryWindow(
                ids,
                seg[:, :t_obs].copy(),
                seg[:, t_obs:].copy(),
                start,
                adj,
                scene.name,
                annotated=ann is not None,
            )
        )
    return out


def leave_one_out_split(scenes: Sequence) -> list[tuple[list, object]]:
    if len(scenes) < 2:
        raise ValueError("leave-one-out needs at least two scenes")
    return [([s for j, s in enumerate(scenes) if j != i], scenes[i]) for i in range(len(scenes))]


def to_relative(track: np.ndarray) -> np.ndarray:
    """Per-step displacements along the time axis (-2); the first step is zero."""
    track = np.asarray(track, dtype=np.float64)
    rel = np.zeros_like(track)
    rel[..., 1:, :] = np.diff(track, axis=-2)
    return rel


def to_absolute(rel: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_relative` given the first position."""
    return np.asarray(start)[..., None, :] + np.cumsum(rel, axis=-2)


@dataclass(frozen=True)
class Normalizer:
    """Multiplicative coordinate scaling by a power of two, so round trips are exact."""

    scale: float = 1.0

    def __post_init__(self) -> None:
        m, _ = math.frexp(self.scale)
        if self.scale <= 0 or m != 0.5:
            raise ValueError(f"scale must be a positive power of two, got {self.scale}")

    @classmethod
    def fit(cls, displacements: np.ndarray) -> "Normalizer":
        """Power of two that brings the RMS displacement near 1."""
        rms = float(np.sqrt(np.mean(np.square(displacements)))) if np.size(displacements) else 0.0
        if rms == 0.0:
            return cls(1.0)
        return cls(2.0 ** round(-math.log2(rms)))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) * self.scale

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) / self.scale
