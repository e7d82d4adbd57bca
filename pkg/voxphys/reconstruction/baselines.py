"""
Prior-free completions of an occupancy grid, used as references for refine.

    extrude_to_table       every occupied voxel is continued straight down to layer z = 0
    carve_observed_empty   voxels a camera ray saw through are forced empty
"""
import logging

import numpy as np

from voxphys.grid.core import BinaryGrid, Grid, ProbGrid, require_same_frame

logger = logging.getLogger(__name__)


def extrude_to_table(g: Grid) -> Grid:
    """
    Column-wise running maximum from the top layer down: a voxel becomes at
    least as occupied as anything above it. Binary grids fill every column
    below its highest occupied voxel.
    """
    if isinstance(g, BinaryGrid):
        bits = np.logical_or.accumulate(g.bits[:, :, ::-1], axis=2)[:, :, ::-1]
        out = BinaryGrid(g.frame, np.ascontiguousarray(bits))
        logger.debug("Extruded %d -> %d voxels", g.count, out.count)
        return out
    values = np.maximum.accumulate(g.values[:, :, ::-1], axis=2)[:, :, ::-1]
    out = g.with_values(np.ascontiguousarray(values))
    logger.debug("Extruded mass %.3f -> %.3f", g.mass, out.mass)
    return out


def carve_observed_empty(V: ProbGrid, empty: BinaryGrid) -> ProbGrid:
    """Zero every voxel of V in the observed-empty channel."""
    require_same_frame(V, empty)
    carved = V.with_values(np.where(empty.bits, 0.0, V.values))
    logger.debug("Carved %d observed-empty voxels", int((empty.bits & (V.values > 0.0)).sum()))
    return carved
