"""
Analytic ray-cast renderer for scenes of axis-aligned boxes on a table plane.

Used to generate depth/label observations with known geometry.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from voxphys.perception.frustum import CameraModel, DepthObservation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Box:
    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]
    label: int

    def __post_init__(self):
        if self.label < 1:
            raise ValueError(f"box label must be >= 1, got {self.label}")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"box must have positive extent, got lo={self.lo} hi={self.hi}")


def pixel_rays(cam: CameraModel) -> Tuple[np.ndarray, np.ndarray]:
    """
    World-space ray origin and per-pixel directions of shape (H, W, 3).
    Directions are scaled so the camera-frame z component is 1, hence the ray
    parameter at a hit equals the depth value.
    """
    v, u = np.indices((cam.height, cam.width), dtype=np.float64)
    dirs_cam = np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones_like(u)], axis=-1)
    dirs = dirs_cam @ cam.rotation.T
    return cam.translation.copy(), dirs


def _box_hits(origin: np.ndarray, dirs: np.ndarray, box: Box) -> np.ndarray:
    """Entry ray parameter per pixel, inf where the ray misses the box."""
    lo = np.asarray(box.lo, dtype=np.float64)
    hi = np.asarray(box.hi, dtype=np.float64)
    safe = np.where(np.abs(dirs) < 1e-12, 1e-12, dirs)
    t1 = (lo - origin) / safe
    t2 = (hi - origin) / safe
    t_near = np.minimum(t1, t2).max(axis=-1)
    t_far = np.maximum(t1, t2).min(axis=-1)
    hit = (t_near <= t_far) & (t_near > 0)
    return np.where(hit, t_near, np.inf)


def render_boxes(
    cam: CameraModel,
    boxes: Sequence[Box],
    table_z: Optional[float] = 0.0,
    table_half_extent: Optional[float] = None,
) -> DepthObservation:
    """
    Render depth and instance labels.

    The table is the plane z = table_z (label 0), optionally limited to a square
    of half side `table_half_extent` around the world origin. Pass table_z=None
    for a scene without background. Rays hitting nothing get depth 0.
    """
    origin, dirs = pixel_rays(cam)
    depth = np.full((cam.height, cam.width), np.inf)
    labels = np.zeros((cam.height, cam.width), dtype=np.int64)

    if table_z is not None:
        dz = dirs[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(dz < 0, (table_z - origin[2]) / dz, np.inf)
        t = np.where(t > 0, t, np.inf)
        if table_half_extent is not None:
            hit = origin + dirs * np.where(np.isfinite(t), t, 0.0)[..., None]
            inside = (np.abs(hit[..., 0]) <= table_half_extent) & (np.abs(hit[..., 1]) <= table_half_extent)
            t = np.where(inside, t, np.inf)
        depth = t

    for box in boxes:
        t = _box_hits(origin, dirs, box)
        closer = t < depth
        depth = np.where(closer, t, depth)
        labels = np.where(closer, box.label, labels)

    missing = ~np.isfinite(depth)
    depth = np.where(missing, 0.0, depth)
    labels = np.where(missing, 0, labels)
    logger.debug("Rendered %d boxes, %d pixels without depth", len(boxes), int(missing.sum()))
    return DepthObservation(depth, labels)
