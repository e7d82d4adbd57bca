"""
Four-channel voxel input representation of one object in a depth observation.

Channels (all in the object's GridFrame):
  F1 - voxels containing points of the object itself
  F2 - voxels containing points of every other labelled object
  F3 - voxels observed to be empty (in front of the measured surface)
  F4 - voxels the camera cannot see (behind surfaces, outside the image,
       missing depth, or not otherwise explained)

Camera frame follows the pinhole convention: x right, y down, z forward.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from voxphys import config
from voxphys.errors import EmptyObject, MalformedInput, NoBackground, UnknownObject
from voxphys.grid.core import BinaryGrid, GridFrame

logger = logging.getLogger(__name__)

# pairwise distances are computed directly below this many points
_PDIST_LIMIT = 4096


# -----------------------------
#  CAMERA / OBSERVATION
# -----------------------------
@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    cam_to_world: np.ndarray

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise MalformedInput(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise MalformedInput(f"image size must be positive, got {self.width}x{self.height}")
        pose = np.array(self.cam_to_world, dtype=np.float64)
        if pose.size != 16:
            raise MalformedInput("cam_to_world must hold 16 values")
        pose = pose.reshape(4, 4)
        rot = pose[:3, :3]
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6) or not np.isclose(np.linalg.det(rot), 1.0, atol=1e-6):
            raise MalformedInput("cam_to_world rotation must be orthonormal with determinant +1")
        pose.flags.writeable = False
        object.__setattr__(self, "cam_to_world", pose)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @classmethod
    def look_at(
        cls,
        eye: Sequence[float],
        target: Sequence[float],
        fx: float,
        fy: float,
        cx: float,
        cy: float,
        width: int,
        height: int,
        up: Sequence[float] = (0.0, 0.0, 1.0),
    ) -> "CameraModel":
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        pose = np.eye(4)
        pose[:3, :3] = np.stack([right, down, forward], axis=1)
        pose[:3, 3] = eye
        return cls(fx, fy, cx, cy, width, height, pose)

    @property
    def rotation(self) -> np.ndarray:
        return self.cam_to_world[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.cam_to_world[:3, 3]

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return (pts - self.translation) @ self.rotation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return pts @ self.rotation.T + self.translation

    def project(self, points_cam: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Pixel coordinates of camera-frame points.

        Returns (u, v, in_front); u and v are meaningless where in_front is False.
        """
        pc = np.asarray(points_cam, dtype=np.float64).reshape(-1, 3)
        z = pc[:, 2]
        in_front = z > 0
        safe_z = np.where(in_front, z, 1.0)
        u = self.fx * pc[:, 0] / safe_z + self.cx
        v = self.fy * pc[:, 1] / safe_z + self.cy
        return u, v, in_front


@dataclass(frozen=True)
class DepthObservation:
    depth: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        depth = np.array(self.depth, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if depth.ndim != 2 or depth.shape != labels.shape:
            raise MalformedInput(f"depth {depth.shape} and labels {labels.shape} must be equal 2-D shapes")
        if not np.all(np.isfinite(depth)) or depth.min(initial=0.0) < 0.0:
            raise MalformedInput("depth must be finite and non-negative")
        if labels.min(initial=0) < 0:
            raise MalformedInput("labels must be non-negative")
        depth.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "labels", labels)

    @property
    def valid(self) -> np.ndarray:
        return self.depth > 0

    def object_ids(self) -> list:
        return sorted(int(i) for i in np.unique(self.labels) if i > 0)


@dataclass(frozen=True)
class FourChannelGrid:
    frame: GridFrame
    channels: Tuple[BinaryGrid, BinaryGrid, BinaryGrid, BinaryGrid]
    k: float = config.K_SCALE
    z_table: float = 0.0
    table_source: str = "manifest"

    def __post_init__(self):
        if len(self.channels) != 4:
            raise ValueError("a four-channel grid needs exactly four channels")
        for ch in self.channels:
            if not ch.frame.matches(self.frame):
                raise ValueError("all channels must share the representation frame")
        if np.any(self.channels[2].bits & self.channels[3].bits):
            raise ValueError("observed-empty and unobserved channels must be disjoint")

    @property
    def object_mask(self) -> BinaryGrid:
        return self.channels[0]

    @property
    def others_mask(self) -> BinaryGrid:
        return self.channels[1]

    @property
    def empty_mask(self) -> BinaryGrid:
        return self.channels[2]

    @property
    def unobserved_mask(self) -> BinaryGrid:
        return self.channels[3]

    def stack(self) -> np.ndarray:
        """Channels as a (4, dx, dy, dz) float32 array."""
        return np.stack([ch.bits for ch in self.channels]).astype(np.float32)


# -----------------------------
#  GEOMETRY
# -----------------------------
def backproject(obs: DepthObservation, cam: CameraModel) -> np.ndarray:
    """
    Organized point cloud of shape (height, width, 3) in world coordinates.
    Pixels without depth hold NaN.
    """
    if obs.depth.shape != (cam.height, cam.width):
        raise MalformedInput(f"observation is {obs.depth.shape}, camera expects {(cam.height, cam.width)}")
    v, u = np.indices(obs.depth.shape, dtype=np.float64)
    z = obs.depth
    pts_cam = np.stack([(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z], axis=-1)
    pts = cam.camera_to_world(pts_cam).reshape(obs.depth.shape + (3,))
    pts[~obs.valid] = np.nan
    return pts


def _max_pairwise_distance(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    if len(points) > _PDIST_LIMIT:
        try:
            points = points[ConvexHull(points).vertices]
        except QhullError:
            points = points[ConvexHull(points, qhull_options="QJ").vertices]
    return float(pdist(points).max())


def grid_frame_for_object(
    points_o: np.ndarray,
    k: float = config.K_SCALE,
    d: int = config.GRID_DIM,
    z_table: float = 0.0,
    min_voxel_size: float = config.MIN_VOXEL_SIZE,
) -> GridFrame:
    """
    Cube of side k * delta_o around the object's centroid, where delta_o is the
    largest distance between two object points (floored at two minimum voxel
    edges). The cube is lifted so that voxel layer z = 0 sits on the table.
    """
    pts = np.asarray(points_o, dtype=np.float64).reshape(-1, 3)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if len(pts) == 0:
        raise EmptyObject("object has no valid points")
    if k <= 0 or d < 2:
        raise ValueError(f"need k > 0 and d >= 2, got k={k} d={d}")

    delta = max(_max_pairwise_distance(pts), 2.0 * min_voxel_size)
    side = k * delta
    voxel_size = side / d
    centroid = pts.mean(axis=0)
    origin = (
        centroid[0] - side / 2.0 + voxel_size / 2.0,
        centroid[1] - side / 2.0 + voxel_size / 2.0,
        float(z_table),
    )
    return GridFrame((d, d, d), voxel_size, origin)


def estimate_table_height(
    obs: DepthObservation, cam: CameraModel, bin_size: float = config.TABLE_BIN
) -> float:
    """Height of the dominant horizontal background plane (mode of background z)."""
    pts = backproject(obs, cam)
    mask = (obs.labels == 0) & obs.valid
    if not mask.any():
        raise NoBackground("no background pixel has valid depth")
    z = pts[mask][:, 2]
    bins = np.floor(z / bin_size).astype(np.int64)
    uniq, counts = np.unique(bins, return_counts=True)
    mode = uniq[np.argmax(counts)]
    return float(z[bins == mode].mean())


def voxelize(points: np.ndarray, frame: GridFrame) -> BinaryGrid:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    bits = np.zeros(frame.dims, dtype=bool)
    if len(pts):
        idx = frame.index_of(pts)
        idx = idx[frame.contains(idx)]
        bits[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return BinaryGrid(frame, bits)


def carve_visibility(
    cam: CameraModel, obs: DepthObservation, frame: GridFrame
) -> Tuple[BinaryGrid, BinaryGrid]:
    """
    Classify voxel centers against the depth image.

    Returns (F3, F4). Voxels within half a voxel of the measured surface are in
    neither channel.
    """
    if obs.depth.shape != (cam.height, cam.width):
        raise MalformedInput(f"observation is {obs.depth.shape}, camera expects {(cam.height, cam.width)}")
    pc = cam.world_to_camera(frame.centers().reshape(-1, 3))
    z = pc[:, 2]
    u, v, front = cam.project(pc)
    u = np.floor(u + 0.5).astype(np.int64)
    v = np.floor(v + 0.5).astype(np.int64)
    in_image = front & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)

    surface = np.zeros_like(z)
    surface[in_image] = obs.depth[v[in_image], u[in_image]]
    measured = in_image & (surface > 0)

    half = frame.voxel_size / 2.0
    empty = measured & (z < surface - half)
    band = measured & (np.abs(z - surface) <= half)
    unobserved = ~empty & ~band
    return (
        BinaryGrid(frame, empty.reshape(frame.dims)),
        BinaryGrid(frame, unobserved.reshape(frame.dims)),
    )


# -----------------------------
#  REPRESENTATION
# -----------------------------
def build_representation(
    obs: DepthObservation,
    cam: CameraModel,
    object_id: int,
    k: float = config.K_SCALE,
    d: int = config.GRID_DIM,
    z_table: Optional[float] = None,
    min_voxel_size: float = config.MIN_VOXEL_SIZE,
) -> FourChannelGrid:
    if object_id not in obs.object_ids():
        raise UnknownObject(f"object {object_id} does not appear in the label image")

    pts = backproject(obs, cam)
    obj_mask = (obs.labels == object_id) & obs.valid
    if not obj_mask.any():
        raise EmptyObject(f"object {object_id} has no pixel with valid depth")
    points_o = pts[obj_mask]

    if z_table is not None:
        table_source = "manifest"
    else:
        try:
            z_table = estimate_table_height(obs, cam)
            table_source = "estimated"
        except NoBackground:
            z_table = float(points_o[:, 2].min())
            table_source = "fallback_min_z"
            logger.warning("No background depth; table height falls back to object min z=%.4f", z_table)

    frame = grid_frame_for_object(points_o, k=k, d=d, z_table=z_table, min_voxel_size=min_voxel_size)

    others_mask = (obs.labels > 0) & (obs.labels != object_id) & obs.valid
    f1 = voxelize(points_o, frame)
    f2 = voxelize(pts[others_mask], frame)
    f3, _ = carve_visibility(cam, obs, frame)

    occupied = f1.bits | f2.bits
    empty = f3.bits & ~occupied
    unobserved = ~occupied & ~empty

    logger.info(
        "Built representation for object %d: %d object, %d other, %d empty, %d unobserved voxels (table %s)",
        object_id, f1.count, f2.count, int(empty.sum()), int(unobserved.sum()), table_source,
    )
    return FourChannelGrid(
        frame,
        (f1, f2, BinaryGrid(frame, empty), BinaryGrid(frame, unobserved)),
        k=float(k),
        z_table=float(z_table),
        table_source=table_source,
    )
