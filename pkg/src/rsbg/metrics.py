"""Displacement errors and pairwise group-recovery scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _check(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 3 or pred.shape[-1] != 2:
        raise ValueError(f"expected matching (N, T, 2) arrays, got {pred.shape} and {truth.shape}")
    return pred, truth


def displacement(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """(N, T) Euclidean distances."""
    pred, truth = _check(pred, truth)
    return np.sqrt(np.sum((pred - truth) ** 2, axis=-1))


def ade(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(displacement(pred, truth).mean())


def fde(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(displacement(pred, truth)[:, -1].mean())


@dataclass
class PairCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __iadd__(self, other: "PairCounts") -> "PairCounts":
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 1.0


def pair_counts(predicted: np.ndarray, truth: np.ndarray) -> PairCounts:
    """Counts over ordered off-diagonal pairs of two boolean adjacency matrices."""
    p = np.asarray(predicted, dtype=bool).copy()
    t = np.asarray(truth).astype(bool)
    np.fill_diagonal(p, False)
    np.fill_diagonal(t, False)
    return PairCounts(int(np.sum(p & t)), int(np.sum(p & ~t)), int(np.sum(~p & t)))
