"""
Dense voxel grids shared by every other module.

A grid lives in a GridFrame: `dims` voxels per axis, cubic voxels of edge
`voxel_size` meters, and `origin` = world position of the *center* of voxel
(0, 0, 0). Gravity points along -z and the table occupies the z = 0 layer.

Storage order is x-fastest (flat index = x + dx * (y + dy * z)). In memory the
arrays are shaped (dx, dy, dz); flatten them with order="F".
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from voxphys import config
from voxphys.errors import FrameMismatch, InvalidGrid, ZeroMass

logger = logging.getLogger(__name__)

Index = Tuple[int, int, int]

_STRUCTURE_RANK = {6: 1, 18: 2, 26: 3}


# -----------------------------
#  FRAME
# -----------------------------
@dataclass(frozen=True)
class GridFrame:
    dims: Tuple[int, int, int]
    voxel_size: float
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise InvalidGrid(f"dims must be three positive integers, got {self.dims}")
        voxel_size = float(self.voxel_size)
        if not math.isfinite(voxel_size) or voxel_size <= 0:
            raise InvalidGrid(f"voxel_size must be > 0, got {self.voxel_size}")
        origin = tuple(float(o) for o in self.origin)
        if len(origin) != 3 or not all(math.isfinite(o) for o in origin):
            raise InvalidGrid(f"origin must be a finite 3-vector, got {self.origin}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "voxel_size", voxel_size)
        object.__setattr__(self, "origin", origin)

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def world_center(self, idx: Sequence[float]) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(idx, dtype=np.float64) * self.voxel_size

    def centers(self) -> np.ndarray:
        """World centers of all voxels, shape dims + (3,)."""
        idx = np.indices(self.dims, dtype=np.float64)
        return np.moveaxis(idx, 0, -1) * self.voxel_size + np.asarray(self.origin)

    def index_of(self, points: np.ndarray) -> np.ndarray:
        """Integer voxel index containing each world point (may be out of range)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.floor((pts - np.asarray(self.origin)) / self.voxel_size + 0.5).astype(np.int64)

    def contains(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx).reshape(-1, 3)
        return np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=1)

    def matches(self, other: "GridFrame") -> bool:
        return (
            self.dims == other.dims
            and math.isclose(self.voxel_size, other.voxel_size, rel_tol=1e-9)
            and np.allclose(self.origin, other.origin, rtol=0.0, atol=1e-9 * self.voxel_size)
        )

    def scaled(self, factor: int) -> "GridFrame":
        """Frame of the grid pooled in factor^3 blocks."""
        dims = tuple(-(-d // factor) for d in self.dims)
        shift = (factor - 1) / 2.0 * self.voxel_size
        origin = tuple(o + shift for o in self.origin)
        return GridFrame(dims, self.voxel_size * factor, origin)


# -----------------------------
#  GRIDS
# -----------------------------
def _as_volume(frame: GridFrame, values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if arr.shape != frame.dims:
        if arr.size != frame.n_voxels:
            raise InvalidGrid(f"expected {frame.n_voxels} values for dims {frame.dims}, got {arr.size}")
        arr = arr.reshape(frame.dims, order="F")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ProbGrid:
    frame: GridFrame
    values: np.ndarray

    def __post_init__(self):
        arr = _as_volume(self.frame, self.values, np.float64)
        if not np.all(np.isfinite(arr)) or arr.min(initial=0.0) < 0.0 or arr.max(initial=0.0) > 1.0:
            raise InvalidGrid("occupancy probabilities must lie in [0, 1]")
        object.__setattr__(self, "values", arr)

    @classmethod
    def zeros(cls, frame: GridFrame) -> "ProbGrid":
        return cls(frame, np.zeros(frame.dims))

    @property
    def mass(self) -> float:
        return float(self.values.sum())

    def with_values(self, values: np.ndarray) -> "ProbGrid":
        return ProbGrid(self.frame, values)

    def flat(self) -> np.ndarray:
        return self.values.ravel(order="F")


@dataclass(frozen=True)
class BinaryGrid:
    frame: GridFrame
    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", _as_volume(self.frame, self.bits, bool))

    @classmethod
    def empty(cls, frame: GridFrame) -> "BinaryGrid":
        return cls(frame, np.zeros(frame.dims, dtype=bool))

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def as_prob(self) -> ProbGrid:
        return ProbGrid(self.frame, self.bits.astype(np.float64))

    def flat(self) -> np.ndarray:
        return self.bits.ravel(order="F")


Grid = Union[ProbGrid, BinaryGrid]


def require_same_frame(*grids: Grid) -> GridFrame:
    frame = grids[0].frame
    for g in grids[1:]:
        if not frame.matches(g.frame):
            raise FrameMismatch(f"grid frames differ: {frame} vs {g.frame}")
    return frame


# -----------------------------
#  DIRECTIONS
# -----------------------------
@dataclass(frozen=True)
class DirectionSet:
    directions: np.ndarray

    def __post_init__(self):
        arr = np.array(self.directions, dtype=np.float64).reshape(-1, 3)
        if len(arr) == 0:
            raise ValueError("direction set is empty")
        if not np.allclose(arr[:, 2], 0.0) or not np.allclose(np.linalg.norm(arr, axis=1), 1.0):
            raise ValueError("directions must be horizontal unit vectors")
        arr.flags.writeable = False
        object.__setattr__(self, "directions", arr)

    def __len__(self) -> int:
        return len(self.directions)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.directions)

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.directions[:, 1], self.directions[:, 0])


def direction_set(n: int = config.N_DIRECTIONS) -> DirectionSet:
    """n evenly spaced horizontal directions, s_j = (cos 2πj/n, sin 2πj/n, 0)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    theta = 2.0 * np.pi * np.arange(n) / n
    return DirectionSet(np.stack([np.cos(theta), np.sin(theta), np.zeros(n)], axis=1))


# -----------------------------
#  BASIC OPERATIONS
# -----------------------------
def binarize(g: ProbGrid, threshold: float = 0.5) -> BinaryGrid:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return BinaryGrid(g.frame, g.values >= threshold)


def center_of_mass(g: ProbGrid) -> np.ndarray:
    """Probability-weighted mean of voxel centers, in world coordinates."""
    mass = g.values.sum()
    if mass <= 0.0:
        raise ZeroMass("center of mass of an empty grid")
    v = g.values
    mean_idx = np.array([
        np.dot(v.sum(axis=(1, 2)), np.arange(g.frame.dims[0])),
        np.dot(v.sum(axis=(0, 2)), np.arange(g.frame.dims[1])),
        np.dot(v.sum(axis=(0, 1)), np.arange(g.frame.dims[2])),
    ]) / mass
    return g.frame.world_center(mean_idx)


def project_scalar(point: Sequence[float], s: Sequence[float], frame: Optional[GridFrame] = None) -> float:
    """
    Scalar coordinate of a point along horizontal direction s.
    With `frame`, `point` is a voxel index and its world center is used.
    """
    p = frame.world_center(point) if frame is not None else np.asarray(point, dtype=np.float64)
    return float(np.dot(p, np.asarray(s, dtype=np.float64)))


def _block_max(arr: np.ndarray, factor: int) -> np.ndarray:
    pad = [(0, (-d) % factor) for d in arr.shape]
    padded = np.pad(arr, pad, mode="constant", constant_values=0)
    cx, cy, cz = (d // factor for d in padded.shape)
    return padded.reshape(cx, factor, cy, factor, cz, factor).max(axis=(1, 3, 5))


def coarsen(g: Grid, factor: int) -> Grid:
    """Max-pool in factor^3 blocks, zero-padding ragged edges."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return g
    frame = g.frame.scaled(factor)
    if isinstance(g, BinaryGrid):
        return BinaryGrid(frame, _block_max(g.bits, factor))
    return ProbGrid(frame, _block_max(g.values, factor))


def expand_blocks(coarse: np.ndarray, factor: int, dims: Tuple[int, int, int]) -> np.ndarray:
    """Write each coarse voxel's value to every fine voxel of its block."""
    fine = coarse
    for axis in range(3):
        fine = np.repeat(fine, factor, axis=axis)
    return fine[: dims[0], : dims[1], : dims[2]]


def neighbor_offsets(neighborhood: int = 26) -> List[Index]:
    if neighborhood not in _STRUCTURE_RANK:
        raise ValueError(f"neighborhood must be 6, 18 or 26, got {neighborhood}")
    rank = _STRUCTURE_RANK[neighborhood]
    return [
        (dx, dy, dz)
        for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
        if 0 < abs(dx) + abs(dy) + abs(dz) <= rank
    ]


def connected_components(g: BinaryGrid, neighborhood: int = 26) -> Tuple[np.ndarray, int]:
    if neighborhood not in _STRUCTURE_RANK:
        raise ValueError(f"neighborhood must be 6, 18 or 26, got {neighborhood}")
    structure = ndimage.generate_binary_structure(3, _STRUCTURE_RANK[neighborhood])
    labels, count = ndimage.label(g.bits, structure=structure)
    return labels, int(count)


# -----------------------------
#  RESAMPLING / COMBINATION
# -----------------------------
def resample_nearest(g: Grid, frame: GridFrame) -> Grid:
    """Nearest-voxel resampling into `frame`; voxels outside the source are 0."""
    src = g.bits if isinstance(g, BinaryGrid) else g.values
    idx = g.frame.index_of(frame.centers().reshape(-1, 3))
    inside = g.frame.contains(idx)
    out = np.zeros(frame.n_voxels, dtype=src.dtype)
    hit = idx[inside]
    out[inside] = src[hit[:, 0], hit[:, 1], hit[:, 2]]
    out = out.reshape(frame.dims)
    if isinstance(g, BinaryGrid):
        return BinaryGrid(frame, out)
    return ProbGrid(frame, out)


def combine_others(grids: Sequence[ProbGrid], frame: Optional[GridFrame] = None) -> ProbGrid:
    """Probability that at least one of several independent grids occupies each voxel."""
    if not grids:
        if frame is None:
            raise ValueError("combine_others needs a frame when no grids are given")
        return ProbGrid.zeros(frame)
    frame = require_same_frame(*grids)
    if len(grids) == 1:
        return grids[0]
    empty = np.ones(frame.dims)
    for g in grids:
        empty = empty * (1.0 - g.values)
    return ProbGrid(frame, np.clip(1.0 - empty, 0.0, 1.0))
