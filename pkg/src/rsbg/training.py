"""Training loop, evaluation and leave-one-out orchestration."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .config import Config
from .data.groups import GroupAnnotation
from .data.tracks import Scene
from .data.windows import TrajectoryWindow, build_windows
from .metrics import PairCounts, displacement, pair_counts
from .model import Batch, RSBGModel
from .numerics import checkpoint, make_optimizer
from .numerics.optim import TrainingError
from .relation import predicted_adjacency

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class EvalReport:
    ade: float
    fde: float
    n_windows: int
    n_pedestrians: int
    rel_precision: Optional[float] = None
    rel_recall: Optional[float] = None
    rel_f1: Optional[float] = None
    wall_time: float = 0.0
    folds: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class WindowResult:
    window: TrajectoryWindow
    pred: np.ndarray  # (N, t_pred, 2)
    R_a: Optional[np.ndarray]


def _batches(windows: Sequence[TrajectoryWindow], size: int):
    for i in range(0, len(windows), size):
        yield windows[i : i + size]


def run_predictions(model: RSBGModel, windows: Sequence[TrajectoryWindow], batch_size: int = 64) -> list[WindowResult]:
    out = []
    for chunk in _batches(list(windows), batch_size):
        preds, rels = model.predict(chunk)
        out.extend(WindowResult(w, p, r) for w, p, r in zip(chunk, preds, rels))
    return out


def summarize(results: Sequence[WindowResult], wall_time: float = 0.0) -> EvalReport:
    """Pool per-pedestrian errors over all windows and relation pairs over annotated ones."""
    if not results:
        return EvalReport(0.0, 0.0, 0, 0, wall_time=wall_time)
    dists = [displacement(r.pred, r.window.fut) for r in results]
    n_ped = sum(d.shape[0] for d in dists)
    ade_v = float(sum(d.sum() for d in dists) / sum(d.size for d in dists))
    fde_v = float(sum(d[:, -1].sum() for d in dists) / n_ped)
    report = EvalReport(ade_v, fde_v, len(results), n_ped, wall_time=wall_time)
    annotated = [r for r in results if r.window.annotated and r.R_a is not None]
    if annotated:
        counts = PairCounts()
        for r in annotated:
            counts += pair_counts(predicted_adjacency(r.R_a), r.window.group_adj)
        report.rel_precision, report.rel_recall, report.rel_f1 = counts.precision, counts.recall, counts.f1
    elif any(not r.window.annotated for r in results):
        log.warning("no group annotations for the evaluated windows; relation metrics omitted")
    return report


def evaluate_model(model: RSBGModel, windows: Sequence[TrajectoryWindow], batch_size: int = 64) -> tuple[EvalReport, list[WindowResult]]:
    start = time.perf_counter()
    results = run_predictions(model, windows, batch_size)
    return summarize(results, time.perf_counter() - start), results


def prediction_rows(results: Sequence[WindowResult]) -> list[dict]:
    """Flat records ``{window_id, ped_id, t, x_hat, y_hat, x, y}`` for plotting."""
    rows = []
    for r in results:
        for i, pid in enumerate(r.window.ped_ids):
            for t in range(r.pred.shape[1]):
                rows.append(
                    {
                        "window_id": r.window.window_id,
                        "ped_id": pid,
                        "t": t + 1,
                        "x_hat": float(r.pred[i, t, 0]),
                        "y_hat": float(r.pred[i, t, 1]),
                        "x": float(r.window.fut[i, t, 0]),
                        "y": float(r.window.fut[i, t, 1]),
                    }
                )
    return rows


# ---------------------------------------------------------------------------
# checkpoints


def save_model(model: RSBGModel, path) -> None:
    checkpoint.save(path, model.params.state(), {"model": model.hyperparameters(), "format": "rsbg"})


def load_model(path) -> RSBGModel:
    params, hyper = checkpoint.load(path)
    if hyper.get("format") != "rsbg":
        raise checkpoint.CheckpointError(f"{path}: not an rsbg model checkpoint")
    model = RSBGModel(Config(hyper["model"]), seed=0)
    model.params.load_state(params)
    return model


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: RSBGModel
    history: list[dict]
    best_epoch: int
    best_state: dict[str, np.ndarray]


def _fmt(x: Optional[float]) -> Optional[float]:
    return None if x is None else float(x)


def train(
    config: Config,
    train_windows: Sequence[TrajectoryWindow],
    val_windows: Sequence[TrajectoryWindow] = (),
    out_dir=None,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Joint trajectory + relation training with best-FDE model selection.

    Windows are reshuffled every epoch from a generator seeded by
    ``train.seed``; the run is bit-reproducible for a fixed config. When
    ``out_dir`` is given, ``run.jsonl`` (header line plus one record per
    epoch) and ``model.ckpt`` (best validation FDE) are written there.
    """
    train_windows = list(train_windows)
    val_windows = list(val_windows)
    if not train_windows:
        raise ValueError("no training windows")
    if config["rsbg.enabled"] and config["rsbg.lambda"] > 0 and not all(w.annotated for w in train_windows):
        raise ValueError("relation supervision needs group annotations; set rsbg.lambda = 0 or supply labels")
    model = RSBGModel(config)
    opt = make_optimizer(config["optim.name"], model.params, config["optim.lr"])
    rng = np.random.default_rng(config["train.seed"])
    bs = config["train.batch_size"]
    out = Path(out_dir) if out_dir is not None else None
    log_file = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_file = (out / "run.jsonl").open("w", encoding="utf-8")
        log_file.write(json.dumps({"config_hash": config.hash(), "config": config.to_json()}, sort_keys=True) + "\n")
    history: list[dict] = []
    best_fde, best_epoch, best_state, stale = math.inf, 0, model.params.state(), 0
    try:
        for epoch in range(1, config["train.epochs"] + 1):
            order = rng.permutation(len(train_windows))
            total, count = 0.0, 0
            for idx in _batches(order, bs):
                chunk = [train_windows[i] for i in idx]
                batch = Batch.from_windows(chunk)
                model.params.zero_grad()
                loss, _, _ = model.losses(batch)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise NumericalError(
                        f"non-finite loss at epoch {epoch} in windows {[w.window_id for w in chunk]}"
                    )
                loss.backward()
                try:
                    opt.step()
                except TrainingError as exc:
                    raise NumericalError(f"{exc} (epoch {epoch}, windows {[w.window_id for w in chunk]})") from exc
                total += value * len(chunk)
                count += len(chunk)
            record = {"epoch": epoch, "train_loss": total / count, "val_ade": None, "val_fde": None, "rel_f1": None}
            if val_windows:
                rep, _ = evaluate_model(model, val_windows)
                record.update(val_ade=rep.ade, val_fde=rep.fde, rel_f1=_fmt(rep.rel_f1))
                score = rep.fde
            else:
                score = record["train_loss"]
            history.append(record)
            if log_file is not None:
                log_file.write(json.dumps(record, sort_keys=True) + "\n")
                log_file.flush()
            if on_epoch is not None:
                on_epoch(record)
            if score < best_fde:
                best_fde, best_epoch, best_state, stale = score, epoch, model.params.state(), 0
                if out is not None:
                    save_model(model, out / "model.ckpt")
            else:
                stale += 1
                if config["train.patience"] > 0 and stale >= config["train.patience"]:
                    break
    finally:
        if log_file is not None:
            log_file.close()
    if out is not None and best_epoch == 0:
        save_model(model, out / "model.ckpt")
    model.params.load_state(best_state)
    return TrainResult(model, history, best_epoch, best_state)


def split_validation(windows: Sequence[TrajectoryWindow], fraction: float) -> tuple[list, list]:
    """Hold out the latest ``fraction`` of each scene's windows (by start frame)."""
    by_scene: dict[str, list[TrajectoryWindow]] = {}
    for w in windows:
        by_scene.setdefault(w.scene, []).append(w)
    train_part, val_part = [], []
    for ws in by_scene.values():
        ws = sorted(ws, key=lambda w: w.start_frame)
        k = int(round(len(ws) * fraction))
        cut = len(ws) - k
        train_part.extend(ws[:cut])
        val_part.extend(ws[cut:])
    return train_part, val_part


def leave_one_out(
    config: Config,
    scenes: Sequence[tuple[Scene, Optional[GroupAnnotation]]],
    out_dir=None,
    val_fraction: float = 0.1,
) -> EvalReport:
    """Train on all scenes but one, test on the held-out scene, for every scene."""
    from .data.windows import leave_one_out_split

    t0 = time.perf_counter()
    t_obs, t_pred = config["data.t_obs"], config["data.t_pred"]
    all_results: list[WindowResult] = []
    folds = []
    for train_scenes, (test_scene, test_ann) in leave_one_out_split(list(scenes)):
        train_ws = [w for s, a in train_scenes for w in build_windows(s, a, t_obs, t_pred)]
        tr, va = split_validation(train_ws, val_fraction)
        fold_dir = Path(out_dir) / test_scene.name if out_dir is not None else None
        result = train(config, tr, va, fold_dir)
        test_ws = build_windows(test_scene, test_ann, t_obs, t_pred)
        rep, res = evaluate_model(result.model, test_ws)
        all_results.extend(res)
        folds.append({"scene": test_scene.name, **rep.to_dict()})
    report = summarize(all_results, time.perf_counter() - t0)
    report.folds = folds
    return report
