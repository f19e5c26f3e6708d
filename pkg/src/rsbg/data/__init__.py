from .groups import (
    AnnotationWindow,
    GroupAnnotation,
    adjacency,
    dumps_groups,
    parse_group_file,
    write_group_file,
)
from .synthetic import SCENARIOS, SyntheticSpec, generate_synthetic
from .tracks import DataError, Scene, TrackPoint, parse_track_file, write_track_file
from .windows import (
    T_OBS,
    T_PRED,
    Normalizer,
    TrajectoryWindow,
    build_windows,
    leave_one_out_split,
    to_absolute,
    to_relative,
)

__all__ = [
    "AnnotationWindow",
    "DataError",
    "GroupAnnotation",
    "Normalizer",
    "SCENARIOS",
    "Scene",
    "SyntheticSpec",
    "T_OBS",
    "T_PRED",
    "TrackPoint",
    "TrajectoryWindow",
    "adjacency",
    "build_windows",
    "dumps_groups",
    "generate_synthetic",
    "leave_one_out_split",
    "parse_group_file",
    "parse_track_file",
    "to_absolute",
    "to_relative",
    "write_group_file",
    "write_track_file",
]
