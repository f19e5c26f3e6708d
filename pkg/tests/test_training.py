import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsbg import Batch, Config, RSBGModel
from rsbg.data import Scene, SyntheticSpec, TrajectoryWindow, build_windows, generate_synthetic
from rsbg.metrics import PairCounts, ade, displacement, fde, pair_counts
from rsbg.training import (
    NumericalError,
    WindowResult,
    evaluate_model,
    leave_one_out,
    load_model,
    prediction_rows,
    save_model,
    split_validation,
    summarize,
    train,
)

TINY = {
    "d_f": 8,
    "rsbg.d_feat": 8,
    "rsbg.d_r": 4,
    "rsbg.hidden": 8,
    "gcn.d_g": 8,
    "decoder.d_dec": 16,
    "train.batch_size": 8,
    "train.patience": 0,
}


def tiny(**over):
    return Config({**TINY, **{k.replace("__", "."): v for k, v in over.items()}})


@pytest.fixture(scope="module")
def following():
    scene, ann = generate_synthetic(SyntheticSpec(scenario="following", seed=3, n_episodes=3, episode_len=24))
    return build_windows(scene, ann)


# -- metrics -----------------------------------------------------------------


def test_metrics_zero_on_truth(rng):
    y = rng.normal(size=(3, 12, 2))
    assert ade(y, y) == 0.0 and fde(y, y) == 0.0


def test_constant_offset():
    y = np.zeros((4, 12, 2))
    assert ade(y + [1.0, 0.0], y) == 1.0 and fde(y + [1.0, 0.0], y) == 1.0


def test_final_step_offset():
    y = np.zeros((2, 12, 2))
    p = y.copy()
    p[:, -1, 1] = 2.0
    assert fde(p, y) == 2.0 and ade(p, y) == pytest.approx(2 / 12, rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 13), st.integers(0, 2**32 - 1))
def test_metrics_match_double_loop(n, t, seed):
    rng = np.random.default_rng(seed)
    p, y = rng.normal(size=(n, t, 2)), rng.normal(size=(n, t, 2))
    d = [[math.hypot(p[i, k, 0] - y[i, k, 0], p[i, k, 1] - y[i, k, 1]) for k in range(t)] for i in range(n)]
    assert abs(ade(p, y) - sum(map(sum, d)) / (n * t)) <= 1e-12
    assert abs(fde(p, y) - sum(row[-1] for row in d) / n) <= 1e-12


def test_metric_shape_mismatch():
    with pytest.raises(ValueError):
        ade(np.zeros((2, 12, 2)), np.zeros((2, 11, 2)))


def test_pair_counts():
    pred = np.array([[0, 1, 1], [1, 0, 0], [0, 0, 0]], dtype=bool)
    truth = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    c = pair_counts(pred, truth)
    assert (c.tp, c.fp, c.fn) == (2, 1, 2)
    assert c.precision == pytest.approx(2 / 3) and c.recall == 0.5 and c.f1 == pytest.approx(4 / 7)
    assert PairCounts().f1 == 1.0


# -- evaluation with stub predictors -----------------------------------------


def _line_window(n=2, speed=1.0, start=0):
    t = np.arange(20, dtype=float)
    track = np.stack([np.stack([speed * t, np.full(20, float(i))], axis=1) for i in range(n)])
    return TrajectoryWindow(list(range(n)), track[:, :8], track[:, 8:], start, np.zeros((n, n)), "line")


def test_perfect_predictor_scores_zero():
    ws = [_line_window(), _line_window(3, start=1)]
    rep = summarize([WindowResult(w, w.fut.copy(), None) for w in ws])
    assert rep.ade == 0.0 and rep.fde == 0.0 and rep.n_pedestrians == 5


def test_zero_displacement_predictor_on_constant_velocity():
    ws = [_line_window(), _line_window(1, start=4)]
    results = [WindowResult(w, np.repeat(w.obs[:, -1:], 12, axis=1), None) for w in ws]
    rep = summarize(results)
    assert rep.fde == pytest.approx(12.0, abs=1e-12) and rep.ade == pytest.approx(6.5, abs=1e-12)


def test_report_equals_recomputation_from_dump(following):
    model = RSBGModel(tiny())
    rep, results = evaluate_model(model, following)
    rows = prediction_rows(results)
    errs = [math.hypot(r["x_hat"] - r["x"], r["y_hat"] - r["y"]) for r in rows]
    finals = [e for e, r in zip(errs, rows) if r["t"] == 12]
    assert abs(rep.ade - sum(errs) / len(errs)) < 1e-12
    assert abs(rep.fde - sum(finals) / len(finals)) < 1e-12
    assert rep.rel_f1 is not None and 0 <= rep.rel_f1 <= 1


def test_unannotated_windows_omit_relation_metrics(caplog):
    w = _line_window()
    w.annotated = False
    rep = summarize([WindowResult(w, w.fut, np.eye(2))])
    assert rep.rel_f1 is None and "no group annotations" in caplog.text


def test_empty_evaluation():
    rep, results = evaluate_model(RSBGModel(tiny()), [])
    assert results == [] and rep.n_windows == 0


# -- batching ----------------------------------------------------------------


def test_batched_forward_equals_per_window(following, rng):
    model = RSBGModel(tiny())
    ws = following[:4]
    joint, rels = model.predict(ws)
    for w, p, r in zip(ws, joint, rels):
        alone, alone_r = model.predict([w])
        assert np.allclose(p, alone[0], atol=1e-12) and np.allclose(r, alone_r[0], atol=1e-14)


def test_batch_loss_weights_each_window_equally(following):
    ws = following[:3]
    batch = Batch.from_windows(ws)
    for lo, hi in zip(batch.offsets[:-1], batch.offsets[1:]):
        assert batch.row_weights[lo:hi].sum() == pytest.approx(1 / 3)


def test_rsbg_off_has_no_relation_params():
    model = RSBGModel(tiny(rsbg__enabled=False))
    assert not any(n.startswith(("rsbg.", "gcn.")) for n in model.params)


# -- training ----------------------------------------------------------------


def test_zero_learning_rate_keeps_initial_model(following):
    cfg = tiny(optim__lr=0.0, train__epochs=1)
    initial = RSBGModel(cfg)
    result = train(cfg, following[:10], following[10:16])
    for name, p in initial.params.items():
        assert np.array_equal(p.data, result.model.params[name].data)
    rep0, _ = evaluate_model(initial, following[10:16])
    assert result.history[0]["val_ade"] == rep0.ade and result.history[0]["val_fde"] == rep0.fde


def test_training_lowers_loss(following):
    result = train(tiny(train__epochs=50, optim__lr=3e-3), following[:12])
    losses = [r["train_loss"] for r in result.history]
    assert len(losses) == 50 and losses[-1] < losses[0]


def test_runs_are_byte_identical(following, tmp_path):
    cfg = tiny(train__epochs=2)
    for d in ("a", "b"):
        train(cfg, following[:10], following[10:14], tmp_path / d)
    for name in ("run.jsonl", "model.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_log_layout(following, tmp_path):
    cfg = tiny(train__epochs=3, loss__gamma="inf")
    train(cfg, following[:8], following[8:12], tmp_path)
    lines = (tmp_path / "run.jsonl").read_text().splitlines()
    head = json.loads(lines[0])
    assert head["config_hash"] == cfg.hash() and head["config"]["loss.gamma"] == "inf"
    records = [json.loads(x) for x in lines[1:]]
    assert [r["epoch"] for r in records] == [1, 2, 3]
    assert set(records[0]) == {"epoch", "train_loss", "val_ade", "val_fde", "rel_f1"}


def test_best_checkpoint_tracks_validation_fde(following, tmp_path):
    result = train(tiny(train__epochs=4, optim__lr=3e-3), following[:8], following[8:12], tmp_path)
    best = min(result.history, key=lambda r: r["val_fde"])
    assert result.best_epoch == best["epoch"]
    rep, _ = evaluate_model(load_model(tmp_path / "model.ckpt"), following[8:12])
    assert rep.fde == best["val_fde"]


def test_early_stopping(following):
    result = train(tiny(train__epochs=30, train__patience=2, optim__lr=0.0), following[:4], following[4:6])
    assert len(result.history) == 3


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_non_finite_loss_names_window(following):
    w = following[0]
    bad = TrajectoryWindow(w.ped_ids, w.obs, w.fut + 1e300, w.start_frame, w.group_adj, "broken")
    with pytest.raises(NumericalError, match="broken:"):
        train(tiny(train__epochs=1, train__batch_size=1), [bad])


def test_relation_supervision_needs_labels(following):
    w = following[0]
    unlabeled = TrajectoryWindow(w.ped_ids, w.obs, w.fut, w.start_frame, w.group_adj, "x", annotated=False)
    with pytest.raises(ValueError, match="rsbg.lambda"):
        train(tiny(train__epochs=1), [unlabeled])
    train(tiny(train__epochs=1, rsbg__lambda=0), [unlabeled])


def test_checkpoint_round_trip_preserves_predictions(following, tmp_path):
    model = RSBGModel(tiny(loss__gamma="inf", encoder__bidirectional=False))
    save_model(model, tmp_path / "m.ckpt")
    back = load_model(tmp_path / "m.ckpt")
    a, _ = model.predict(following[:3])
    b, _ = back.predict(following[:3])
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert back.config["encoder.bidirectional"] is False


def test_split_validation_holds_out_latest():
    ws = [_line_window(start=s) for s in range(10)]
    tr, va = split_validation(ws, 0.2)
    assert [w.start_frame for w in va] == [8, 9] and len(tr) == 8


def test_leave_one_out_two_scenes(tmp_path):
    scenes = []
    for k in range(2):
        s, a = generate_synthetic(SyntheticSpec(seed=k, n_episodes=2, episode_len=22, name=f"s{k}"))
        scenes.append((s, a))
    rep = leave_one_out(tiny(train__epochs=1), scenes, tmp_path)
    assert [f["scene"] for f in rep.folds] == ["s0", "s1"]
    assert rep.n_windows == sum(f["n_windows"] for f in rep.folds)
    assert (tmp_path / "s0" / "model.ckpt").exists()


# -- degenerate inputs -------------------------------------------------------


def test_single_pedestrian_windows_run_end_to_end(tmp_path):
    scene = Scene("solo", np.array([[f, 1, 0.3 * f, 0.1 * f] for f in range(25)], dtype=float))
    ws = build_windows(scene)
    assert ws and all(w.n == 1 for w in ws)
    result = train(tiny(train__epochs=2, rsbg__lambda=0), ws)
    preds, rels = result.model.predict(ws)
    assert all(np.all(np.isfinite(p)) for p in preds)
    assert all(np.array_equal(r, [[1.0]]) for r in rels)


def test_empty_scene_empty_report():
    ws = build_windows(Scene("void"))
    rep, _ = evaluate_model(RSBGModel(tiny()), ws)
    assert ws == [] and rep.n_windows == 0 and rep.ade == 0.0
