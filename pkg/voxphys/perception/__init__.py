from voxphys.perception.frustum import (
    CameraModel,
    DepthObservation,
    FourChannelGrid,
    backproject,
    build_representation,
    carve_visibility,
    estimate_table_height,
    grid_frame_for_object,
    voxelize,
)
from voxphys.perception.synthetic import Box, render_boxes

__all__ = [
    "Box",
    "CameraModel",
    "DepthObservation",
    "FourChannelGrid",
    "backproject",
    "build_representation",
    "carve_visibility",
    "estimate_table_height",
    "grid_frame_for_object",
    "render_boxes",
    "voxelize",
]
