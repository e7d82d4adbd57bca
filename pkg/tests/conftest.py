import json
import os

import numpy as np
import pytest

from voxphys.grid.core import BinaryGrid, GridFrame, ProbGrid
from voxphys.perception import Box, CameraModel, render_boxes

ASSETS = os.path.join(os.path.dirname(__file__), "assets")


# ---------- helpers ----------
def cube_frame(d, voxel_size=1.0, origin=(0.0, 0.0, 0.0)) -> GridFrame:
    dims = (d, d, d) if isinstance(d, int) else tuple(d)
    return GridFrame(dims, voxel_size, origin)


def grid_from(values, voxel_size=1.0, origin=(0.0, 0.0, 0.0)) -> ProbGrid:
    values = np.asarray(values, dtype=np.float64)
    return ProbGrid(GridFrame(values.shape, voxel_size, origin), values)


def mask_like(grid: ProbGrid, bits) -> BinaryGrid:
    return BinaryGrid(grid.frame, np.asarray(bits, dtype=bool))


def down_camera(height=1.0, size=64, focal=50.0) -> CameraModel:
    """Camera at (0, 0, height) looking straight down, image rows along -y."""
    c = (size - 1) / 2.0
    return CameraModel.look_at(
        (0.0, 0.0, height), (0.0, 0.0, 0.0), focal, focal, c, c, size, size, up=(0.0, 1.0, 0.0)
    )


# -----------------------------
#  FIXTURES
# -----------------------------
@pytest.fixture
def grid_g1():
    """Hand-written 3x3x3 object grid and surrounding occupancy."""
    with open(os.path.join(ASSETS, "grid_g1.json"), "r", encoding="utf-8") as f:
        raw = json.load(f)
    frame = GridFrame(tuple(raw["dims"]), raw["voxel_size"], tuple(raw["origin"]))
    return ProbGrid(frame, raw["object"]), ProbGrid(frame, raw["others"])


@pytest.fixture
def slab():
    """2x2 fully occupied slab resting on the table in a 4x4x3 grid."""
    values = np.zeros((4, 4, 3))
    values[1:3, 1:3, 0] = 1.0
    return grid_from(values)


@pytest.fixture
def floating_mug():
    """
    Observed mug top hovering over an occluded column of low probability.

    Returns (V, occluded, others) on a 32^3 grid of 1 cm voxels.
    """
    frame = cube_frame(32, 0.01)
    values = np.full(frame.dims, 1e-4)
    values[12:20, 12:20, 16:24] = 0.95
    values[12:20, 12:20, 0:16] = 0.2
    occluded = np.zeros(frame.dims, dtype=bool)
    occluded[12:20, 12:20, 0:16] = True
    return ProbGrid(frame, values), BinaryGrid(frame, occluded), ProbGrid.zeros(frame)


@pytest.fixture
def two_box_scene():
    """Box 1 at the origin, box 2 partly in front of it; camera above and to the side."""
    boxes = [
        Box((-0.05, -0.05, 0.0), (0.05, 0.05, 0.10), label=1),
        Box((0.15, -0.06, 0.0), (0.22, 0.06, 0.12), label=2),
    ]
    cam = CameraModel.look_at((0.6, 0.0, 0.5), (0.0, 0.0, 0.05), 120.0, 120.0, 47.5, 47.5, 96, 96)
    return cam, render_boxes(cam, boxes), boxes
