"""
Mesh extraction and evaluation: iso-surfaces of occupancy grids, voxel-level
overlap removal between objects, area-uniform surface sampling, Chamfer
distance, and OBJ I/O.
"""
import logging
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import trimesh
from scipy.spatial import cKDTree
from skimage import measure

from voxphys.errors import EmptyMesh, EmptySet, MalformedInput
from voxphys.grid.core import BinaryGrid, ProbGrid, require_same_frame

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(tris) and (tris.min() < 0 or tris.max() >= len(verts)):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def area(self) -> float:
        return float(self.triangle_areas().sum())


# -----------------------------
#  EXTRACTION
# -----------------------------
def marching_cubes(V: ProbGrid, iso: float = 0.5) -> TriMesh:
    """
    Iso-surface of the occupancy field in world coordinates. The field is padded
    with one empty layer so surfaces touching the grid border are closed.
    """
    if not 0.0 < iso < 1.0:
        raise ValueError(f"iso must lie in (0, 1), got {iso}")
    field = np.pad(V.values, 1, mode="constant", constant_values=0.0)
    if field.max() <= iso:
        return TriMesh.empty()

    vs = V.frame.voxel_size
    verts, faces, _, _ = measure.marching_cubes(
        field, level=iso, spacing=(vs, vs, vs), allow_degenerate=False, method="lewiner"
    )
    verts = verts + np.asarray(V.frame.origin) - vs
    mesh = TriMesh(verts, faces)
    keep = mesh.triangle_areas() > 0.0
    if not keep.all():
        mesh = TriMesh(mesh.vertices, mesh.triangles[keep])
    logger.info("Extracted mesh: %d vertices, %d triangles", len(mesh.vertices), len(mesh.triangles))
    return mesh


def edge_incidence(m: TriMesh) -> Counter:
    """Number of triangles using each undirected edge."""
    counts: Counter = Counter()
    for a, b, c in m.triangles.tolist():
        for u, v in ((a, b), (b, c), (c, a)):
            counts[(min(u, v), max(u, v))] += 1
    return counts


def mesh_edges_manifold(m: TriMesh) -> bool:
    """True when every edge is shared by exactly two triangles."""
    return all(n == 2 for n in edge_incidence(m).values())


def resolve_overlaps(grids: Sequence[BinaryGrid]) -> List[BinaryGrid]:
    """
    Remove contested voxels from every object except the one with the fewest
    occupied voxels (earlier in the list on ties).
    """
    if not grids:
        return []
    frame = require_same_frame(*grids)
    order = sorted(range(len(grids)), key=lambda k: (grids[k].count, k))
    claimed = np.zeros(frame.dims, dtype=bool)
    out: List[Optional[BinaryGrid]] = [None] * len(grids)
    for k in order:
        bits = grids[k].bits & ~claimed
        removed = grids[k].count - int(bits.sum())
        if removed:
            logger.debug("Object %d loses %d overlapping voxels", k, removed)
        claimed |= grids[k].bits
        out[k] = BinaryGrid(frame, bits)
    return out


# -----------------------------
#  EVALUATION
# -----------------------------
def surface_sample(m: TriMesh, n: int, seed: int = 0) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if m.is_empty:
        raise EmptyMesh("cannot sample an empty mesh")
    areas = m.triangle_areas()
    total = areas.sum()
    if total <= 0.0:
        raise EmptyMesh("mesh has zero surface area")

    rng = np.random.default_rng(seed)
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)[:, None]
    r2 = r2[:, None]
    a, b, c = (m.vertices[m.triangles[tri, k]] for k in range(3))
    return (1.0 - s) * a + s * (1.0 - r2) * b + s * r2 * c


def chamfer_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Symmetric mean nearest-neighbor distance (unsquared), in the units of the points."""
    A = np.asarray(A, dtype=np.float64).reshape(-1, 3)
    B = np.asarray(B, dtype=np.float64).reshape(-1, 3)
    if len(A) == 0 or len(B) == 0:
        raise EmptySet("chamfer distance needs two non-empty point sets")
    d_ab, _ = cKDTree(B).query(A, k=1)
    d_ba, _ = cKDTree(A).query(B, k=1)
    return float(0.5 * (d_ab.mean() + d_ba.mean()))


# -----------------------------
#  OBJ I/O
# -----------------------------
def write_obj(path: str, m: TriMesh) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for x, y, z in m.vertices.tolist():
            f.write(f"v {x:.9f} {y:.9f} {z:.9f}\n")
        for a, b, c in (m.triangles + 1).tolist():
            f.write(f"f {a} {b} {c}\n")


def _face_references(text: str) -> Tuple[int, int]:
    """(vertex records, largest 1-based vertex reference) of OBJ text."""
    n_vertices, largest = 0, 0
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            n_vertices += 1
        elif parts[0] == "f":
            for p in parts[1:]:
                ref = p.split("/")[0]
                if ref.lstrip("-").isdigit():
                    i = int(ref)
                    largest = max(largest, i if i > 0 else n_vertices + i + 1)
    return n_vertices, largest


def read_obj(path: str) -> TriMesh:
    """Triangle mesh of an OBJ file, polygons triangulated by trimesh; an OBJ without vertices is empty."""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    n_vertices, largest = _face_references(text)
    if n_vertices == 0:
        return TriMesh.empty()
    if largest > n_vertices:
        raise MalformedInput(f"{path}: face references vertex {largest}, file has {n_vertices}")
    try:
        loaded = trimesh.load(path, file_type="obj", force="mesh", process=False)
        if isinstance(loaded, trimesh.Scene):
            meshes = [g for g in loaded.geometry.values() if isinstance(g, trimesh.Trimesh)]
            loaded = trimesh.util.concatenate(meshes) if meshes else None
        if loaded is None or len(loaded.vertices) == 0:
            return TriMesh.empty()
        return TriMesh(np.asarray(loaded.vertices), np.asarray(loaded.faces))
    except Exception as e:
        raise MalformedInput(f"{path}: {e}")
