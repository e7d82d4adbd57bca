from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voxphys.errors import FrameMismatch, InvalidGrid, ZeroMass
from voxphys.grid.core import (
    BinaryGrid,
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

from conftest import cube_frame, grid_from


@st.composite
def prob_grids(draw, max_dim=5):
    dims = tuple(draw(st.integers(1, max_dim)) for _ in range(3))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    return grid_from(rng.random(dims))


# -----------------------------
#  FRAMES AND GRIDS
# -----------------------------
def test_frame_rejects_bad_parameters():
    with pytest.raises(InvalidGrid):
        GridFrame((0, 2, 2), 1.0)
    with pytest.raises(InvalidGrid):
        GridFrame((2, 2, 2), 0.0)
    with pytest.raises(InvalidGrid):
        GridFrame((2, 2, 2), 1.0, (0.0, np.nan, 0.0))


def test_prob_grid_rejects_out_of_range_values():
    with pytest.raises(InvalidGrid):
        grid_from(np.full((2, 2, 2), 1.5))
    with pytest.raises(InvalidGrid):
        ProbGrid(cube_frame(2), np.zeros(7))


def test_flat_storage_is_x_fastest():
    frame = GridFrame((2, 3, 4), 1.0)
    flat = np.arange(24) / 24.0
    g = ProbGrid(frame, flat)
    x, y, z = 1, 2, 3
    assert g.values[x, y, z] == flat[x + 2 * (y + 3 * z)]
    np.testing.assert_array_equal(g.flat(), flat)


def test_world_center_uses_voxel_center_origin():
    frame = GridFrame((4, 4, 4), 0.5, (1.0, 2.0, 3.0))
    np.testing.assert_allclose(frame.world_center((0, 0, 0)), (1.0, 2.0, 3.0))
    np.testing.assert_allclose(frame.world_center((2, 1, 3)), (2.0, 2.5, 4.5))
    np.testing.assert_array_equal(frame.index_of([[2.0, 2.5, 4.5], [1.24, 2.0, 3.0]]), [[2, 1, 3], [0, 0, 0]])


def test_require_same_frame_detects_mismatch():
    a = ProbGrid.zeros(cube_frame(3))
    b = ProbGrid.zeros(cube_frame(3, 2.0))
    assert require_same_frame(a, a) == a.frame
    with pytest.raises(FrameMismatch):
        require_same_frame(a, b)


# -----------------------------
#  BINARIZE / CENTER OF MASS / PROJECTION
# -----------------------------
def test_binarize_is_inclusive_at_threshold():
    g = grid_from(np.array([0.49, 0.5, 0.51]).reshape(3, 1, 1))
    np.testing.assert_array_equal(binarize(g).bits.ravel(), [False, True, True])


@given(prob_grids(), st.floats(0.05, 0.5), st.floats(0.0, 0.45))
def test_binarize_is_monotone_in_threshold(g, low, gap):
    high = min(low + gap, 0.95)
    assert np.all(binarize(g, high).bits <= binarize(g, low).bits)


def test_center_of_mass_examples():
    g = grid_from(np.zeros((3, 3, 3)))
    with pytest.raises(ZeroMass):
        center_of_mass(g)

    values = np.zeros((3, 3, 3))
    values[2, 1, 0] = 0.3
    np.testing.assert_allclose(center_of_mass(grid_from(values)), (2.0, 1.0, 0.0))

    values = np.zeros((4, 1, 1))
    values[0, 0, 0] = 1.0
    values[3, 0, 0] = 0.5
    np.testing.assert_allclose(center_of_mass(grid_from(values)), (1.0, 0.0, 0.0))


@settings(max_examples=30)
@given(prob_grids(), st.integers(-5, 5), st.integers(-5, 5), st.integers(-5, 5))
def test_center_of_mass_follows_translation(g, tx, ty, tz):
    shift = np.array([tx, ty, tz]) * g.frame.voxel_size
    moved = ProbGrid(GridFrame(g.frame.dims, g.frame.voxel_size, tuple(np.asarray(g.frame.origin) + shift)), g.values)
    np.testing.assert_allclose(center_of_mass(moved), center_of_mass(g) + shift, atol=1e-9)


def test_project_scalar_examples():
    assert project_scalar((3.0, 4.0, 7.0), (1.0, 0.0, 0.0)) == 3.0
    assert project_scalar((3.0, 4.0, 7.0), (0.0, 1.0, 0.0)) == 4.0
    frame = GridFrame((4, 4, 4), 0.5, (1.0, 0.0, 0.0))
    assert project_scalar((2, 0, 0), (1.0, 0.0, 0.0), frame) == pytest.approx(2.0)


def test_direction_set_spacing():
    four = direction_set(4)
    np.testing.assert_allclose(four.directions, [[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]], atol=1e-15)
    np.testing.assert_allclose(direction_set(1).directions, [[1, 0, 0]])
    angles = np.degrees(direction_set(25).angles)
    assert angles[1] == pytest.approx(14.4)
    with pytest.raises(ValueError):
        direction_set(0)


# -----------------------------
#  COARSENING
# -----------------------------
def test_coarsen_factor_one_is_identity():
    g = grid_from(np.random.default_rng(0).random((3, 4, 5)))
    assert coarsen(g, 1) is g


def test_coarsen_single_block_takes_max():
    values = np.zeros((8, 8, 8))
    values[3, 5, 1] = 0.9
    c = coarsen(grid_from(values), 8)
    assert c.frame.dims == (1, 1, 1)
    assert c.values[0, 0, 0] == 0.9
    np.testing.assert_allclose(c.frame.world_center((0, 0, 0)), (3.5, 3.5, 3.5))


def test_coarsen_matches_brute_force_with_ragged_edges():
    rng = np.random.default_rng(1)
    values = rng.random((5, 7, 3))
    c = coarsen(grid_from(values), 2)
    assert c.frame.dims == (3, 4, 2)
    for idx in np.ndindex(c.frame.dims):
        block = values[2 * idx[0]:2 * idx[0] + 2, 2 * idx[1]:2 * idx[1] + 2, 2 * idx[2]:2 * idx[2] + 2]
        assert c.values[idx] == block.max()


@given(prob_grids(max_dim=6), st.floats(0.1, 0.9))
def test_coarsen_commutes_with_binarize(g, threshold):
    left = coarsen(binarize(g, threshold), 2).bits
    right = binarize(coarsen(g, 2), threshold).bits
    np.testing.assert_array_equal(left, right)


def test_expand_blocks_inverts_block_layout():
    coarse = np.arange(8, dtype=float).reshape(2, 2, 2)
    fine = expand_blocks(coarse, 3, (5, 6, 4))
    assert fine.shape == (5, 6, 4)
    assert fine[4, 5, 3] == coarse[1, 1, 1]
    assert fine[2, 0, 2] == coarse[0, 0, 0]


# -----------------------------
#  CONNECTED COMPONENTS
# -----------------------------
def _flood_fill_count(bits, offsets):
    seen = np.zeros_like(bits)
    count = 0
    for start in zip(*np.nonzero(bits)):
        if seen[start]:
            continue
        count += 1
        seen[start] = True
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for off in offsets:
                nxt = tuple(c + o for c, o in zip(cur, off))
                if all(0 <= c < n for c, n in zip(nxt, bits.shape)) and bits[nxt] and not seen[nxt]:
                    seen[nxt] = True
                    queue.append(nxt)
    return count


def test_diagonal_voxels_connect_only_in_26_neighborhood():
    bits = np.zeros((2, 2, 2), dtype=bool)
    bits[0, 0, 0] = bits[1, 1, 1] = True
    g = BinaryGrid(cube_frame(2), bits)
    assert connected_components(g, 26)[1] == 1
    assert connected_components(g, 18)[1] == 2
    assert connected_components(g, 6)[1] == 2


@pytest.mark.parametrize("neighborhood", [6, 18, 26])
@pytest.mark.parametrize("seed", range(5))
def test_component_count_matches_flood_fill(neighborhood, seed):
    bits = np.random.default_rng(seed).random((5, 5, 5)) < 0.3
    g = BinaryGrid(cube_frame(5), bits)
    labels, count = connected_components(g, neighborhood)
    assert count == _flood_fill_count(bits, neighbor_offsets(neighborhood))
    assert np.all((labels > 0) == bits)


# -----------------------------
#  RESAMPLING / COMBINATION
# -----------------------------
def test_resample_nearest_same_frame_is_identity():
    g = grid_from(np.random.default_rng(2).random((4, 3, 2)))
    np.testing.assert_array_equal(resample_nearest(g, g.frame).values, g.values)


def test_resample_nearest_outside_source_is_empty():
    g = grid_from(np.ones((2, 2, 2)))
    target = GridFrame((2, 2, 2), 1.0, (10.0, 0.0, 0.0))
    assert resample_nearest(g, target).mass == 0.0


def test_combine_others_is_probabilistic_or():
    a = grid_from(np.full((2, 2, 2), 0.5))
    b = grid_from(np.full((2, 2, 2), 0.2))
    np.testing.assert_allclose(combine_others([a, b]).values, 0.6)
    assert combine_others([a]) is a
    assert combine_others([], a.frame).mass == 0.0
