"""Group annotation files.

JSON schema::

    {
      "scene": "<scene name>",
      "windows": [
        {"start_frame": 0, "end_frame": 120, "groups": [[1, 2], [3]]},
        ...
      ]
    }

Frames are inclusive on both ends. Groups within one window are disjoint;
pedestrians not listed are singletons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .tracks import DataError, Scene


@dataclass(frozen=True)
class AnnotationWindow:
    start_frame: int
    end_frame: int
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if self.end_frame < self.start_frame:
            raise DataError(f"annotation window ends before it starts: {self.start_frame}..{self.end_frame}")
        seen: set[int] = set()
        for g in self.groups:
            for pid in g:
                if pid in seen:
                    raise DataError(
                        f"pedestrian {pid} appears in more than one group in window "
                        f"{self.start_frame}..{self.end_frame}"
                    )
                seen.add(pid)

    def covers(self, frame: int) -> bool:
        return self.start_frame <= frame <= self.end_frame


@dataclass
class GroupAnnotation:
    scene_name: str
    windows: list[AnnotationWindow] = field(default_factory=list)

    def window_at(self, frame: int) -> Optional[AnnotationWindow]:
        for w in self.windows:
            if w.covers(frame):
                return w
        return None

    def validate_against(self, scene: Scene) -> None:
        known = set(scene.ped_ids)
        for w in self.windows:
            for g in w.groups:
                unknown = [p for p in g if p not in known]
                if unknown:
                    raise DataError(f"annotation for {self.scene_name!r} names unknown pedestrians {unknown}")

    def to_dict(self) -> dict:
        return {
            "scene": self.scene_name,
            "windows": [
                {
                    "start_frame": int(w.start_frame),
                    "end_frame": int(w.end_frame),
                    "groups": [[int(p) for p in g] for g in w.groups],
                }
                for w in self.windows
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GroupAnnotation":
        try:
            windows = [
                AnnotationWindow(
                    int(w["start_frame"]),
                    int(w["end_frame"]),
                    tuple(tuple(int(p) for p in g) for g in w["groups"]),
                )
                for w in obj["windows"]
            ]
            return cls(str(obj["scene"]), windows)
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed group annotation: {exc}") from exc


def adjacency(groups: Sequence[Sequence[int]], ped_ids: Sequence[int]) -> np.ndarray:
    """0/1 same-group matrix over ``ped_ids`` with zero diagonal."""
    index = {p: i for i, p in enumerate(ped_ids)}
    adj = np.zeros((len(ped_ids), len(ped_ids)))
    for g in groups:
        members = [index[p] for p in g if p in index]
        for a in members:
            for b in members:
                if a != b:
                    adj[a, b] = 1.0
    return adj


def parse_group_file(path) -> GroupAnnotation:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    return GroupAnnotation.from_dict(obj)


def dumps_groups(ann: GroupAnnotation) -> str:
    return json.dumps(ann.to_dict(), indent=1, sort_keys=True) + "\n"


def write_group_file(ann: GroupAnnotation, path) -> None:
    Path(path).write_text(dumps_groups(ann), encoding="utf-8")
