"""Labeled synthetic crowd scenes with known social groups.

A scene is a sequence of independent episodes laid end to end in time. Each
episode holds ``n_groups`` groups whose members share a motion pattern:

* ``joining``: members converge on a meeting point from different directions,
  arrive together, then walk on side by side along their mean heading.
* ``following``: a leader walks a smoothly turning path; each follower replays
  it ``k * lag`` frames later.
* ``collision_avoidance``: pairs of groups cross; near the conflict point each
  group sidesteps laterally with a smooth bump, in opposite directions.
* ``mixed``: each episode draws one of the three above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .groups import AnnotationWindow, GroupAnnotation
from .tracks import DataError, Scene

SCENARIOS = ("joining", "following", "collision_avoidance", "mixed")


@dataclass(frozen=True)
class SyntheticSpec:
    scenario: str = "mixed"
    n_groups: tuple[int, int] = (2, 3)
    agents_per_group: tuple[int, int] = (2, 3)
    noise_std: float = 0.05
    seed: int = 0
    n_episodes: int = 40
    episode_len: int = 30
    lag: tuple[int, int] = (3, 5)
    speed: tuple[float, float] = (0.35, 0.6)  # meters per frame
    group_spacing: float = 12.0  # meters between group anchor cells
    name: str = "synthetic"

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise DataError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        for label, (lo, hi), floor in (
            ("n_groups", self.n_groups, 1),
            ("agents_per_group", self.agents_per_group, 1),
            ("lag", self.lag, 1),
        ):
            if lo < floor or hi < lo:
                raise DataError(f"{label} range must satisfy {floor} <= lo <= hi, got {(lo, hi)}")
        if not self.noise_std >= 0:
            raise DataError(f"noise_std must be >= 0, got {self.noise_std}")
        if self.n_episodes < 1 or self.episode_len < 1:
            raise DataError("n_episodes and episode_len must be >= 1")
        if not self.group_spacing > 0:
            raise DataError(f"group_spacing must be positive, got {self.group_spacing}")
        if not 0 < self.speed[0] <= self.speed[1]:
            raise DataError(f"speed range must be positive and ordered, got {self.speed}")


def _rot(theta: float) -> np.ndarray:
    return np.array([np.cos(theta), np.sin(theta)])


def _following(rng, m: int, length: int, spec: SyntheticSpec, origin, heading) -> list[np.ndarray]:
    lag = int(rng.integers(spec.lag[0], spec.lag[1] + 1))
    pre = lag * (m - 1)
    total = length + pre
    speed = rng.uniform(*spec.speed)
    # heading rate is piecewise constant over short segments
    omega = np.zeros(total)
    t = 0
    while t < total:
        seg = int(rng.integers(4, 9))
        omega[t : t + seg] = rng.uniform(-0.3, 0.3) if rng.random() < 0.7 else 0.0
        t += seg
    theta = heading + np.concatenate([[0.0], np.cumsum(omega[:-1])])
    steps = speed * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    path = origin + np.concatenate([np.zeros((1, 2)), np.cumsum(steps[:-1], axis=0)])
    return [path[pre - k * lag : pre - k * lag + length] for k in range(m)]


def _joining(rng, m: int, length: int, spec: SyntheticSpec, origin, heading) -> list[np.ndarray]:
    meet_t = int(rng.integers(max(2, length // 3), max(3, (2 * length) // 3) + 1))
    speed = rng.uniform(*spec.speed)
    # approach directions spread around the shared heading
    spread = rng.uniform(np.pi / 4, 3 * np.pi / 4)
    offsets = np.linspace(-spread / 2, spread / 2, m) if m > 1 else np.zeros(1)
    offsets = rng.permutation(offsets)
    lateral = _rot(heading + np.pi / 2)
    slots = (np.arange(m) - (m - 1) / 2) * 0.6
    goal_vel = speed * 0.8 * _rot(heading)
    tracks = []
    for k in range(m):
        target = origin + slots[k] * lateral
        approach = _rot(heading + offsets[k])
        dist = speed * meet_t * rng.uniform(0.8, 1.2)
        start = target - dist * approach
        t = np.arange(length)[:, None]
        before = start + (target - start) * np.minimum(t, meet_t) / meet_t
        after = goal_vel * np.maximum(t - meet_t, 0)
        tracks.append(before + after)
    return tracks


def _straight(rng, m: int, length: int, spec: SyntheticSpec, origin, heading) -> list[np.ndarray]:
    speed = rng.uniform(*spec.speed)
    lateral = _rot(heading + np.pi / 2)
    t = np.arange(length)[:, None]
    return [origin + (k - (m - 1) / 2) * 0.6 * lateral + t * speed * _rot(heading) for k in range(m)]


def _crossing_pair(rng, sizes: tuple[int, int], length: int, spec: SyntheticSpec, center) -> list[list[np.ndarray]]:
    t_c = rng.uniform(0.35, 0.65) * length
    width = rng.uniform(2.5, 4.5)
    base = rng.uniform(0, 2 * np.pi)
    crossing = rng.uniform(np.pi / 3, 2 * np.pi / 3) * rng.choice([-1, 1])
    out = []
    for side, (m, theta) in enumerate(zip(sizes, (base, base + crossing))):
        speed = rng.uniform(*spec.speed)
        d = _rot(theta)
        lateral = _rot(theta + np.pi / 2)
        amp = rng.uniform(0.8, 1.5) * (1 if side == 0 else -1)
        t = np.arange(length)[:, None]
        bump = amp * np.exp(-(((t - t_c) / width) ** 2))
        group = []
        for k in range(m):
            slot = (k - (m - 1) / 2) * 0.6
            group.append(center + (t - t_c) * speed * d + (slot + bump) * lateral)
        out.append(group)
    return out


def _episode(rng, scenario: str, spec: SyntheticSpec) -> list[list[np.ndarray]]:
    n_groups = int(rng.integers(spec.n_groups[0], spec.n_groups[1] + 1))
    sizes = [int(rng.integers(spec.agents_per_group[0], spec.agents_per_group[1] + 1)) for _ in range(n_groups)]
    length = spec.episode_len
    # group anchors on a jittered grid so groups start well apart
    cells = rng.permutation(16)[:n_groups]
    anchors = [np.array([c % 4, c // 4], dtype=float) * spec.group_spacing + rng.uniform(-2, 2, size=2) for c in cells]
    groups: list[list[np.ndarray]] = []
    if scenario == "collision_avoidance":
        i = 0
        while i + 1 < n_groups:
            groups.extend(_crossing_pair(rng, (sizes[i], sizes[i + 1]), length, spec, anchors[i]))
            i += 2
        if i < n_groups:
            groups.append(_straight(rng, sizes[i], length, spec, anchors[i], rng.uniform(0, 2 * np.pi)))
        return groups
    make = _joining if scenario == "joining" else _following
    for m, anchor in zip(sizes, anchors):
        groups.append(make(rng, m, length, spec, anchor, rng.uniform(0, 2 * np.pi)))
    return groups


def generate_synthetic(spec: SyntheticSpec) -> tuple[Scene, GroupAnnotation]:
    """Pure function of ``spec``: same spec, same scene and annotation."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    rows = []
    windows = []
    next_id = 1
    for e in range(spec.n_episodes):
        scenario = spec.scenario
        if scenario == "mixed":
            scenario = SCENARIOS[int(rng.integers(0, 3))]
        start = e * spec.episode_len
        frames = np.arange(start, start + spec.episode_len)
        groups = []
        for tracks in _episode(rng, scenario, spec):
            ids = []
            for track in tracks:
                noisy = track + (rng.normal(0.0, spec.noise_std, size=track.shape) if spec.noise_std > 0 else 0.0)
                rows.append(np.column_stack([frames, np.full(len(frames), next_id), noisy]))
                ids.append(next_id)
                next_id += 1
            groups.append(tuple(ids))
        windows.append(AnnotationWindow(int(frames[0]), int(frames[-1]), tuple(groups)))
    points = np.concatenate(rows) if rows else np.zeros((0, 4))
    return Scene(spec.name, points, 1), GroupAnnotation(spec.name, windows)
