from voxphys.grid.core import (
    BinaryGrid,
    DirectionSet,
    GridFrame,
    ProbGrid,
    binarize,
    center_of_mass,
    coarsen,
    combine_others,
    connected_components,
    direction_set,
    expand_blocks,
    neighbor_offsets,
    project_scalar,
    require_same_frame,
    resample_nearest,
)

__all__ = [
    "BinaryGrid",
    "DirectionSet",
    "GridFrame",
    "ProbGrid",
    "binarize",
    "center_of_mass",
    "coarsen",
    "combine_others",
    "connected_components",
    "direction_set",
    "expand_blocks",
    "neighbor_offsets",
    "project_scalar",
    "require_same_frame",
    "resample_nearest",
]
