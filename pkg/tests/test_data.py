import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsbg.data import (
    AnnotationWindow,
    DataError,
    GroupAnnotation,
    Normalizer,
    Scene,
    SyntheticSpec,
    TrackPoint,
    adjacency,
    build_windows,
    dumps_groups,
    generate_synthetic,
    leave_one_out_split,
    parse_group_file,
    parse_track_file,
    to_absolute,
    to_relative,
    write_group_file,
    write_track_file,
)


# -- track files -------------------------------------------------------------


def test_empty_track_file(tmp_path):
    f = tmp_path / "empty.txt"
    f.write_text("")
    scene = parse_track_file(f)
    assert len(scene) == 0 and scene.ped_ids == [] and scene.name == "empty"


def test_two_line_track_file(tmp_path):
    f = tmp_path / "s.txt"
    f.write_text("0 1 0.0 0.0\n10 1 1.0 0.0\n")
    scene = parse_track_file(f)
    assert scene.ped_ids == [1] and len(scene) == 2 and scene.frame_stride == 10


def test_hundred_line_fixture_matches_line_count(tmp_path, rng):
    lines = ["# frame ped x y"]
    for frame in range(0, 340, 10):
        for ped in (3, 7, 11):
            if len(lines) <= 100 and rng.random() < 0.99:
                lines.append(f"{frame}\t{ped}  {rng.normal():.4f} {rng.normal():.4f}")
    lines = lines[:101]
    f = tmp_path / "fixture.txt"
    f.write_text("\n".join(lines) + "\n")
    oracle: dict[int, int] = {}
    for line in f.read_text().splitlines():
        if line.startswith("#"):
            continue
        ped = int(line.split()[1])
        oracle[ped] = oracle.get(ped, 0) + 1
    tracks = parse_track_file(f).tracks()
    assert {p: len(t[0]) for p, t in tracks.items()} == oracle


@pytest.mark.parametrize(
    "line, msg",
    [("0 1 0.0", "expected 4 fields"), ("0 1 a 0.0", "non-numeric"), ("0.5 1 0 0", "frame and ped ids must be integers"), ("0 1 nan 0", "non-finite")],
)
def test_bad_track_lines_report_line_number(tmp_path, line, msg):
    f = tmp_path / "bad.txt"
    f.write_text("0 2 0.0 0.0\n" + line + "\n")
    with pytest.raises(DataError, match=f"bad.txt:2: {msg}"):
        parse_track_file(f)


def test_duplicate_points_rejected():
    with pytest.raises(DataError, match="duplicate"):
        Scene("dup", np.array([[0, 1, 0.0, 0.0], [0, 1, 1.0, 1.0]]))


def test_track_file_round_trip(tmp_path, rng):
    pts = [TrackPoint(f, p, float(rng.normal()), float(rng.normal())) for f in range(0, 50, 5) for p in (1, 4)]
    scene = Scene.from_points("rt", pts)
    write_track_file(scene, tmp_path / "rt.txt")
    back = parse_track_file(tmp_path / "rt.txt")
    assert np.array_equal(back.points, scene.points) and back.frame_stride == 5


# -- group files -------------------------------------------------------------


def test_group_adjacency_single_pair():
    adj = adjacency([[1, 2], [3]], [1, 2, 3])
    assert adj.sum() == 2 and adj[0, 1] == adj[1, 0] == 1


def test_empty_groups_give_zero_adjacency():
    assert not adjacency([], [5, 6, 7]).any()


def test_group_file_round_trip(tmp_path, rng):
    windows = []
    for k in range(4):
        ids = rng.permutation(np.arange(1, 13)).tolist()
        cuts = sorted(rng.choice(np.arange(1, 12), size=3, replace=False).tolist())
        groups = tuple(tuple(g) for g in np.split(np.array(ids), cuts) if len(g))
        windows.append(AnnotationWindow(100 * k, 100 * k + 99, groups))
    ann = GroupAnnotation("scene", windows)
    write_group_file(ann, tmp_path / "g.json")
    assert parse_group_file(tmp_path / "g.json") == ann
    assert json.loads(dumps_groups(ann))["scene"] == "scene"


def test_overlapping_groups_rejected():
    with pytest.raises(DataError, match="more than one group"):
        AnnotationWindow(0, 10, ((1, 2), (2, 3)))


def test_malformed_group_file(tmp_path):
    f = tmp_path / "g.json"
    f.write_text('{"scene": "x"}')
    with pytest.raises(DataError, match="malformed"):
        parse_group_file(f)
    f.write_text("{")
    with pytest.raises(DataError, match="invalid JSON"):
        parse_group_file(f)


def test_annotation_names_unknown_pedestrian():
    scene = Scene("s", np.array([[0, 1, 0.0, 0.0]]))
    with pytest.raises(DataError, match="unknown"):
        GroupAnnotation("s", [AnnotationWindow(0, 5, ((1, 9),))]).validate_against(scene)


# -- windows -----------------------------------------------------------------


def _scene(spans, stride=1):
    rows = []
    for pid, (lo, hi) in spans.items():
        for f in range(lo, hi, stride):
            rows.append((f, pid, float(f) * 0.1 + pid, float(pid)))
    return Scene("fix", np.array(rows, dtype=float).reshape(-1, 4), stride)


def test_single_pedestrian_twenty_frames():
    ws = build_windows(_scene({1: (0, 20)}))
    assert len(ws) == 1 and ws[0].n == 1 and np.array_equal(ws[0].group_adj, [[0.0]])


def test_nineteen_frames_give_no_window():
    assert build_windows(_scene({1: (0, 19)})) == []


def test_empty_scene_gives_no_windows():
    assert build_windows(Scene("empty")) == []


def brute_force_windows(scene, t_obs=8, t_pred=12):
    present = {(int(f), int(p)) for f, p, _, _ in scene.points}
    frames = sorted({f for f, _ in present})
    out = []
    for s in range(frames[0], frames[-1] + 1, scene.frame_stride):
        peds = [
            p
            for p in scene.ped_ids
            if all((s + k * scene.frame_stride, p) in present for k in range(t_obs + t_pred))
        ]
        if peds:
            out.append((s, peds))
    return out


@pytest.mark.parametrize("stride", [1, 10])
def test_window_count_matches_brute_force(stride):
    scene = _scene({1: (0, 45 * stride), 2: (10 * stride, 38 * stride), 3: (25 * stride, 60 * stride)}, stride)
    got = [(w.start_frame, w.ped_ids) for w in build_windows(scene)]
    assert got == brute_force_windows(scene)


def test_window_with_gap_is_skipped():
    rows = [(f, 1, float(f), 0.0) for f in range(30) if f != 12]
    scene = Scene("gap", np.array(rows, dtype=float))
    assert [(w.start_frame, w.ped_ids) for w in build_windows(scene)] == brute_force_windows(scene)


def test_window_adjacency_follows_start_frame_annotation():
    scene = _scene({1: (0, 40), 2: (0, 40), 3: (0, 40)})
    ann = GroupAnnotation("fix", [AnnotationWindow(0, 9, ((1, 2),)), AnnotationWindow(10, 40, ((2, 3),))])
    ws = {w.start_frame: w for w in build_windows(scene, ann)}
    assert ws[9].group_adj[0, 1] == 1 and ws[9].group_adj[1, 2] == 0
    assert ws[10].group_adj[1, 2] == 1 and ws[10].group_adj[0, 1] == 0


def test_windows_without_annotation_are_flagged():
    ws = build_windows(_scene({1: (0, 20), 2: (0, 20)}))
    assert not ws[0].annotated and not ws[0].group_adj.any()


def _components(adj):
    n = len(adj)
    label = list(range(n))
    for i in range(n):
        for j in range(n):
            if adj[i][j]:
                a, b = label[i], label[j]
                label = [a if x == b else x for x in label]
    comp: dict[int, set] = {}
    for i, lab in enumerate(label):
        comp.setdefault(lab, set()).add(i)
    return sorted(map(sorted, comp.values()))


def test_window_adjacency_components_match_groups():
    scene, ann = generate_synthetic(SyntheticSpec(seed=3, n_episodes=4))
    for w in build_windows(scene, ann):
        adj = w.group_adj
        assert np.array_equal(adj, adj.T) and not np.diag(adj).any()
        groups = ann.window_at(w.start_frame).groups
        expected = [sorted(w.ped_ids.index(p) for p in g if p in w.ped_ids) for g in groups]
        expected = [g for g in expected if g]
        listed = {i for g in expected for i in g}
        expected += [[i] for i in range(w.n) if i not in listed]
        assert _components(adj) == sorted(expected)


def test_leave_one_out_split():
    five = list("abcde")
    folds = leave_one_out_split(five)
    assert len(folds) == 5
    for train, test in folds:
        assert test not in train and len(train) == 4
    assert [len(tr) for tr, _ in leave_one_out_split(["x", "y"])] == [1, 1]
    with pytest.raises(ValueError):
        leave_one_out_split(["only"])


# -- coordinate transforms ---------------------------------------------------


def test_stationary_and_straight_displacements():
    still = np.tile([[3.0, -1.0]], (8, 1))
    assert not to_relative(still).any()
    line = np.stack([np.arange(8.0), np.zeros(8)], axis=1)
    assert np.array_equal(to_relative(line)[1:], np.tile([[1.0, 0.0]], (7, 1)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_relative_absolute_inverse(seed):
    track = np.cumsum(np.random.default_rng(seed).normal(size=(3, 20, 2)), axis=1)
    back = to_absolute(to_relative(track), track[:, 0])
    assert np.max(np.abs(back - track)) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_normalizer_round_trip_exact(seed):
    x = np.random.default_rng(seed).normal(scale=7.0, size=(5, 2))
    norm = Normalizer.fit(x)
    assert np.array_equal(norm.denormalize(norm.normalize(x)), x)


def test_normalizer_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        Normalizer(3.0)


# -- synthetic generator -----------------------------------------------------


def test_following_lag_is_exact_shift():
    spec = SyntheticSpec(scenario="following", noise_std=0.0, lag=(2, 2), n_groups=(1, 1), agents_per_group=(3, 3), n_episodes=1)
    scene, ann = generate_synthetic(spec)
    tracks = scene.tracks()
    leader, *followers = ann.windows[0].groups[0]
    lead = tracks[leader][1]
    for k, pid in enumerate(followers, start=1):
        assert np.allclose(tracks[pid][1][2 * k :], lead[: len(lead) - 2 * k], atol=1e-12)


def test_synthetic_is_deterministic():
    a = generate_synthetic(SyntheticSpec(scenario="mixed", seed=11, n_episodes=5))
    b = generate_synthetic(SyntheticSpec(scenario="mixed", seed=11, n_episodes=5))
    assert np.array_equal(a[0].points, b[0].points) and a[1] == b[1]
    c = generate_synthetic(SyntheticSpec(scenario="mixed", seed=12, n_episodes=5))
    assert not np.array_equal(a[0].points, c[0].points)


@pytest.mark.parametrize("seed", range(5))
def test_joining_pair_gets_closer(seed):
    spec = SyntheticSpec(scenario="joining", n_groups=(1, 1), agents_per_group=(2, 2), n_episodes=1, seed=seed)
    scene, _ = generate_synthetic(spec)
    (_, a), (_, b) = scene.tracks().values()
    assert np.linalg.norm(a[-1] - b[-1]) < np.linalg.norm(a[0] - b[0])


def test_synthetic_annotation_covers_every_pedestrian():
    scene, ann = generate_synthetic(SyntheticSpec(seed=4, n_episodes=6))
    listed = sorted(p for w in ann.windows for g in w.groups for p in g)
    assert listed == scene.ped_ids
    ann.validate_against(scene)


@pytest.mark.parametrize(
    "kwargs",
    [{"scenario": "dancing"}, {"agents_per_group": (0, 0)}, {"n_groups": (3, 2)}, {"noise_std": -1.0}, {"n_episodes": 0}],
)
def test_invalid_synthetic_spec(kwargs):
    with pytest.raises(DataError):
        generate_synthetic(SyntheticSpec(**kwargs))
