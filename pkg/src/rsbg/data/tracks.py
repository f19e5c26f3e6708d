"""Track files: one ``frame_id ped_id x y`` record per line."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Iterable

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class TrackPoint:
    frame_id: int
    ped_id: int
    x: float
    y: float


@dataclass
class Scene:
    """All tracks of one recording.

    ``points`` is an (M, 4) float array of ``frame, ped, x, y`` rows sorted by
    pedestrian then frame.
    """

    name: str
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    frame_stride: int = 1

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
        if len(pts):
            if not np.all(np.isfinite(pts)):
                raise DataError(f"scene {self.name!r}: non-finite values")
            order = np.lexsort((pts[:, 0], pts[:, 1]))
            pts = pts[order]
            key = pts[:, :2]
            dup = np.all(key[1:] == key[:-1], axis=1)
            if dup.any():
                f, p = key[1:][dup][0]
                raise DataError(f"scene {self.name!r}: duplicate point for frame {int(f)}, ped {int(p)}")
        self.points = pts
        self.points.setflags(write=False)

    @classmethod
    def from_points(cls, name: str, points: Iterable[TrackPoint], frame_stride: int | None = None) -> "Scene":
        arr = np.array([(p.frame_id, p.ped_id, p.x, p.y) for p in points], dtype=np.float64).reshape(-1, 4)
        stride = frame_stride if frame_stride is not None else infer_frame_stride(arr[:, 0])
        return cls(name, arr, stride)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def ped_ids(self) -> list[int]:
        return [int(p) for p in np.unique(self.points[:, 1])]

    @property
    def frames(self) -> np.ndarray:
        return np.unique(self.points[:, 0]).astype(np.int64)

    def tracks(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """``ped_id -> (frames[int], xy[T, 2])`` with frames ascending."""
        out = {}
        if not len(self.points):
            return out
        peds = self.points[:, 1]
        cuts = np.flatnonzero(np.diff(peds)) + 1
        for chunk in np.split(self.points, cuts):
            out[int(chunk[0, 1])] = (chunk[:, 0].astype(np.int64), chunk[:, 2:4].copy())
        return out

    def iter_points(self):
        for f, p, x, y in self.points:
            yield TrackPoint(int(f), int(p), float(x), float(y))


def infer_frame_stride(frames) -> int:
    uniq = np.unique(np.asarray(frames, dtype=np.int64))
    if len(uniq) < 2:
        return 1
    return int(reduce(math.gcd, np.diff(uniq).tolist()))


def parse_track_file(path, name: str | None = None) -> Scene:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        fields = s.split()
        if len(fields) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 fields, got {line!r}")
        try:
            frame, ped = float(fields[0]), float(fields[1])
            x, y = float(fields[2]), float(fields[3])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric field in {line!r}") from None
        if frame != int(frame) or ped != int(ped) or frame < 0:
            raise DataError(f"{path}:{lineno}: frame and ped ids must be integers, got {line!r}")
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DataError(f"{path}:{lineno}: non-finite coordinate in {line!r}")
        rows.append((frame, ped, x, y))
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return Scene(name or path.stem, arr, infer_frame_stride(arr[:, 0]))


def write_track_file(scene: Scene, path) -> None:
    # frame order matches the usual ETH/UCY dumps
    pts = scene.points[np.lexsort((scene.points[:, 1], scene.points[:, 0]))]
    lines = [f"{int(f)} {int(p)} {float(x)!r} {float(y)!r}" for f, p, x, y in pts]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
