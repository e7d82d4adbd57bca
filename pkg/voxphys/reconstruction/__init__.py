from voxphys.reconstruction.baselines import carve_observed_empty, extrude_to_table
from voxphys.reconstruction.meshing import (
    TriMesh,
    chamfer_distance,
    marching_cubes,
    mesh_edges_manifold,
    read_obj,
    resolve_overlaps,
    surface_sample,
    write_obj,
)
from voxphys.reconstruction.refine import (
    PRESETS,
    RefineParams,
    RefineReport,
    refine,
    refine_scene,
    refine_scene_with_reports,
)

__all__ = [
    "PRESETS",
    "RefineParams",
    "RefineReport",
    "TriMesh",
    "carve_observed_empty",
    "chamfer_distance",
    "extrude_to_table",
    "marching_cubes",
    "mesh_edges_manifold",
    "read_obj",
    "refine",
    "refine_scene",
    "refine_scene_with_reports",
    "resolve_overlaps",
    "surface_sample",
    "write_obj",
]
