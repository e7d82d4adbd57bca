"""
File formats used by the command line: voxel grid files (.vxg) and scene
manifests with raw depth/label images.

Voxel grid file layout:
    b"VXGR" | u32 LE header length | UTF-8 JSON header | float32 LE payload
Payload is channel-major, x-fastest within a channel.
"""
import json
import logging
import os
import struct
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, PositiveInt, ValidationError

from voxphys.errors import MalformedInput
from voxphys.grid.core import BinaryGrid, GridFrame, ProbGrid
from voxphys.perception.frustum import CameraModel, DepthObservation

logger = logging.getLogger(__name__)

MAGIC = b"VXGR"


# -------------------------
#  VOXEL GRID FILES
# -------------------------
class VoxelGridHeader(BaseModel):
    dims: Tuple[PositiveInt, PositiveInt, PositiveInt]
    channels: PositiveInt = 1
    voxel_size: float = Field(gt=0.0)
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    dtype: str = Field("f32", pattern="^f32$")
    meta: Dict[str, Any] = Field(default_factory=dict)

    @property
    def frame(self) -> GridFrame:
        return GridFrame(self.dims, self.voxel_size, self.origin)


@dataclass
class VoxelGridFile:
    header: VoxelGridHeader
    data: np.ndarray  # (channels, dx, dy, dz), float64

    @property
    def frame(self) -> GridFrame:
        return self.header.frame

    def prob_grid(self, channel: int = 0) -> ProbGrid:
        return ProbGrid(self.frame, self.data[channel])

    def mask(self, channel: int = 0) -> BinaryGrid:
        return BinaryGrid(self.frame, self.data[channel] > 0.5)


def write_voxel_grid(path: str, frame: GridFrame, channels: np.ndarray, meta: Optional[Dict[str, Any]] = None) -> None:
    data = np.asarray(channels, dtype=np.float64)
    if data.shape == frame.dims:
        data = data[None]
    if data.shape[1:] != frame.dims:
        raise MalformedInput(f"channel shape {data.shape[1:]} does not match dims {frame.dims}")
    header = VoxelGridHeader(
        dims=frame.dims,
        channels=data.shape[0],
        voxel_size=frame.voxel_size,
        origin=frame.origin,
        meta=meta or {},
    )
    head = header.model_dump_json().encode("utf-8")
    payload = b"".join(ch.ravel(order="F").astype("<f4").tobytes() for ch in data)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(head)))
        f.write(head)
        f.write(payload)
    logger.debug("Wrote %s: %d channels, dims %s", path, header.channels, frame.dims)


def read_voxel_grid(path: str) -> VoxelGridFile:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise MalformedInput(f"{path}: not a voxel grid file")
    (head_len,) = struct.unpack("<I", raw[4:8])
    try:
        header = VoxelGridHeader.model_validate_json(raw[8:8 + head_len])
    except ValidationError as e:
        raise MalformedInput(f"{path}: bad header: {e}")

    n = header.channels * header.dims[0] * header.dims[1] * header.dims[2]
    payload = raw[8 + head_len:]
    if len(payload) != 4 * n:
        raise MalformedInput(f"{path}: payload has {len(payload)} bytes, header implies {4 * n}")
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    data = flat.reshape((header.channels,) + tuple(reversed(header.dims))).transpose(0, 3, 2, 1)
    if not np.all(np.isfinite(data)):
        raise MalformedInput(f"{path}: payload contains non-finite values")
    return VoxelGridFile(header, np.ascontiguousarray(data))


# -------------------------
#  SCENE MANIFESTS
# -------------------------
class CameraSpec(BaseModel):
    fx: float = Field(gt=0.0)
    fy: float = Field(gt=0.0)
    cx: float
    cy: float
    width: PositiveInt
    height: PositiveInt
    cam_to_world: List[float] = Field(min_length=16, max_length=16)

    def to_camera(self) -> CameraModel:
        pose = np.array(self.cam_to_world, dtype=np.float64).reshape(4, 4)
        return CameraModel(self.fx, self.fy, self.cx, self.cy, self.width, self.height, pose)


class SceneManifest(BaseModel):
    camera: CameraSpec
    depth_file: str
    label_file: str
    z_table: Optional[float] = None


def _read_raw(path: str, dtype: str, shape: Tuple[int, int]) -> np.ndarray:
    arr = np.fromfile(path, dtype=dtype)
    if arr.size != shape[0] * shape[1]:
        raise MalformedInput(f"{path}: expected {shape[0] * shape[1]} values, found {arr.size}")
    return arr.reshape(shape)


def load_scene(manifest_path: str) -> Tuple[CameraModel, DepthObservation, Optional[float]]:
    """
    Parameters:
    - manifest_path: JSON manifest; image paths are relative to its directory

    Returns:
    - camera, observation and the manifest's table height (None if absent)
    """
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = SceneManifest.model_validate(json.load(f))
    except (ValidationError, json.JSONDecodeError) as e:
        raise MalformedInput(f"{manifest_path}: {e}")

    base = os.path.dirname(os.path.abspath(manifest_path))
    cam = manifest.camera.to_camera()
    shape = (cam.height, cam.width)
    try:
        depth = _read_raw(os.path.join(base, manifest.depth_file), "<f4", shape)
        labels = _read_raw(os.path.join(base, manifest.label_file), "<u2", shape)
    except FileNotFoundError as e:
        raise MalformedInput(f"missing scene file: {e.filename}")
    obs = DepthObservation(depth.astype(np.float64), labels.astype(np.int64))
    logger.info("Loaded scene %s: %dx%d, objects %s", manifest_path, cam.width, cam.height, obs.object_ids())
    return cam, obs, manifest.z_table


def write_scene(
    directory: str, cam: CameraModel, obs: DepthObservation, z_table: Optional[float] = None, stem: str = "scene"
) -> str:
    """Write depth, labels and a manifest into `directory`; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    depth_name, label_name = f"{stem}_depth.f32", f"{stem}_labels.u16"
    obs.depth.astype("<f4").tofile(os.path.join(directory, depth_name))
    obs.labels.astype("<u2").tofile(os.path.join(directory, label_name))
    manifest = SceneManifest(
        camera=CameraSpec(
            fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy,
            width=cam.width, height=cam.height,
            cam_to_world=cam.cam_to_world.ravel().tolist(),
        ),
        depth_file=depth_name,
        label_file=label_name,
        z_table=z_table,
    )
    path = os.path.join(directory, f"{stem}.json")
    with open(path, "w", encoding="utf-8") as f:
        f.write(manifest.model_dump_json(indent=2))
    return path
