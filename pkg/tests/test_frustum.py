import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voxphys.errors import EmptyObject, MalformedInput, NoBackground, UnknownObject
from voxphys.grid.core import GridFrame
from voxphys.perception import (
    Box,
    CameraModel,
    DepthObservation,
    backproject,
    build_representation,
    carve_visibility,
    estimate_table_height,
    grid_frame_for_object,
    render_boxes,
    voxelize,
)

from conftest import down_camera


# ---------- helpers ----------
def _ray_box(origin, direction, lo, hi):
    """Scalar slab test; entry parameter or inf."""
    t_near, t_far = -np.inf, np.inf
    for k in range(3):
        if abs(direction[k]) < 1e-15:
            if origin[k] < lo[k] or origin[k] > hi[k]:
                return np.inf
            continue
        t1 = (lo[k] - origin[k]) / direction[k]
        t2 = (hi[k] - origin[k]) / direction[k]
        t_near = max(t_near, min(t1, t2))
        t_far = min(t_far, max(t1, t2))
    if t_near > t_far or t_near <= 0:
        return np.inf
    return t_near


def _oracle_depth(cam, boxes, u, v, table_z=0.0):
    """Depth seen at pixel (u, v) by direct ray casting."""
    d_cam = np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
    d = cam.rotation @ d_cam
    o = cam.translation
    best = np.inf
    if d[2] < 0:
        best = (table_z - o[2]) / d[2]
    for b in boxes:
        best = min(best, _ray_box(o, d, b.lo, b.hi))
    return 0.0 if not np.isfinite(best) else best


def _random_two_box_scene(seed):
    """Box 1 at the origin, a lower box 2 somewhere in front of it, camera looking on from +x."""
    rng = np.random.default_rng(seed)
    w1, h1 = rng.uniform(0.06, 0.12), rng.uniform(0.10, 0.14)
    x2, y2 = rng.uniform(0.10, 0.16), rng.uniform(-0.06, 0.06)
    w2, h2 = rng.uniform(0.04, 0.08), rng.uniform(0.04, 0.09)
    boxes = [
        Box((-w1 / 2, -w1 / 2, 0.0), (w1 / 2, w1 / 2, h1), label=1),
        Box((x2, y2 - w2 / 2, 0.0), (x2 + w2, y2 + w2 / 2, h2), label=2),
    ]
    azimuth, r, height = rng.uniform(-0.5, 0.5), rng.uniform(0.5, 0.7), rng.uniform(0.35, 0.6)
    eye = (r * np.cos(azimuth), r * np.sin(azimuth), height)
    cam = CameraModel.look_at(eye, (0.0, 0.0, 0.05), 80.0, 80.0, 31.5, 31.5, 64, 64)
    return cam, boxes


def _cells(q, dims, tol=1e-7):
    """Voxels whose cell may contain a point at continuous index q - 0.5."""
    options = [{int(np.floor(c - tol)), int(np.floor(c + tol))} for c in q]
    return [c for c in itertools.product(*options) if all(0 <= i < n for i, n in zip(c, dims))]


def _oracle_representation(cam, obs, boxes, frame, object_id):
    """(F1, F2, F3, F4, unsure) by per-pixel and per-voxel ray casting; unsure voxels sit on a boundary."""
    dims, origin, vs = frame.dims, np.asarray(frame.origin), frame.voxel_size
    f1, f2, unsure = (np.zeros(dims, dtype=bool) for _ in range(3))
    for v, u in zip(*np.nonzero(obs.labels > 0)):
        d = cam.rotation @ np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
        p = cam.translation + _oracle_depth(cam, boxes, u, v) * d
        cells = _cells((p - origin) / vs + 0.5, dims)
        if len(cells) == 1:
            (f1 if obs.labels[v, u] == object_id else f2)[cells[0]] = True
        else:
            for c in cells:
                unsure[c] = True

    carved = np.zeros(dims, dtype=bool)
    pcs = cam.world_to_camera(frame.centers().reshape(-1, 3)).reshape(dims + (3,))
    half = vs / 2.0
    for idx in np.ndindex(dims):
        x, y, z = pcs[idx]
        if z <= 0:
            continue
        fu, fv = cam.fx * x / z + cam.cx + 0.5, cam.fy * y / z + cam.cy + 0.5
        if min(abs(fu - round(fu)), abs(fv - round(fv))) < 1e-9:
            unsure[idx] = True
            continue
        u, v = int(np.floor(fu)), int(np.floor(fv))
        if not (0 <= u < cam.width and 0 <= v < cam.height):
            continue
        surface = _oracle_depth(cam, boxes, u, v)
        if surface <= 0:
            continue
        if abs(abs(z - surface) - half) < 1e-9:
            unsure[idx] = True
        carved[idx] = z < surface - half

    occupied = f1 | f2
    return f1, f2, carved & ~occupied, ~occupied & ~carved, unsure


# -----------------------------
#  CAMERA / BACKPROJECTION
# -----------------------------
def test_backproject_identity_pose():
    cam = CameraModel(1.0, 1.0, 0.0, 0.0, 1, 1, np.eye(4))
    pts = backproject(DepthObservation(np.ones((1, 1)), np.zeros((1, 1))), cam)
    np.testing.assert_allclose(pts[0, 0], (0.0, 0.0, 1.0))


def test_backproject_offset_pixel_and_missing_depth():
    cam = CameraModel(100.0, 100.0, 50.0, 50.0, 200, 100, np.eye(4))
    depth = np.zeros((100, 200))
    depth[50, 150] = 2.0
    pts = backproject(DepthObservation(depth, np.zeros_like(depth)), cam)
    np.testing.assert_allclose(pts[50, 150], (2.0, 0.0, 2.0))
    assert np.all(np.isnan(pts[0, 0]))


def test_backproject_rejects_shape_mismatch():
    cam = CameraModel(1.0, 1.0, 0.0, 0.0, 4, 4, np.eye(4))
    with pytest.raises(MalformedInput):
        backproject(DepthObservation(np.ones((3, 4)), np.zeros((3, 4))), cam)


def test_camera_rejects_non_rigid_pose():
    pose = np.eye(4)
    pose[0, 0] = 2.0
    with pytest.raises(MalformedInput):
        CameraModel(1.0, 1.0, 0.0, 0.0, 4, 4, pose)


@settings(max_examples=25, deadline=None)
@given(
    st.tuples(st.floats(0.5, 2), st.floats(-2, 2), st.floats(0.5, 2)),
    st.integers(0, 63),
    st.integers(0, 47),
    st.floats(0.2, 3.0),
)
def test_backprojected_points_project_back_to_their_pixel(eye, u, v, z):
    cam = CameraModel.look_at(eye, (0.0, 0.0, 0.0), 60.0, 55.0, 31.5, 23.5, 64, 48)
    depth = np.zeros((48, 64))
    depth[v, u] = z
    pts = backproject(DepthObservation(depth, np.zeros_like(depth)), cam)
    pu, pv, front = cam.project(cam.world_to_camera(pts[v, u]))
    assert front[0]
    assert pu[0] == pytest.approx(u, abs=1e-6)
    assert pv[0] == pytest.approx(v, abs=1e-6)
    assert cam.world_to_camera(pts[v, u])[0, 2] == pytest.approx(z, rel=1e-9)


# -----------------------------
#  GRID PLACEMENT
# -----------------------------
def test_grid_side_is_k_times_extent():
    pts = np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]])
    frame = grid_frame_for_object(pts, k=4.0, d=32, z_table=0.0)
    assert frame.voxel_size * 32 == pytest.approx(0.4)
    np.testing.assert_allclose(frame.world_center((0, 0, 0))[:2] + 0.2 - frame.voxel_size / 2, (0.05, 0.0), atol=1e-12)


def test_single_point_uses_minimum_extent():
    frame = grid_frame_for_object(np.array([[1.0, 2.0, 3.0]]), k=4.0, d=16, min_voxel_size=0.005)
    assert frame.voxel_size == pytest.approx(4.0 * 0.01 / 16)


def test_table_is_bottom_voxel_layer():
    pts = np.array([[0.0, 0.0, 0.8], [0.05, 0.05, 0.9]])
    frame = grid_frame_for_object(pts, k=4.0, d=16, z_table=0.7)
    assert frame.world_center((0, 0, 0))[2] == pytest.approx(0.7)


@given(st.floats(0.5, 5.0))
def test_grid_scales_with_the_object(scale):
    pts = np.array([[0.0, 0.0, 0.1], [0.1, 0.05, 0.2], [0.02, 0.08, 0.15]])
    a = grid_frame_for_object(pts, k=4.0, d=16, z_table=0.1)
    b = grid_frame_for_object(pts * scale, k=4.0, d=16, z_table=0.1 * scale)
    assert b.voxel_size == pytest.approx(a.voxel_size * scale, rel=1e-9)
    np.testing.assert_allclose(b.origin, np.asarray(a.origin) * scale, rtol=1e-9, atol=1e-12)


def test_grid_frame_needs_points():
    with pytest.raises(EmptyObject):
        grid_frame_for_object(np.full((3, 3), np.nan))


def test_extent_of_large_cloud_uses_hull():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(6000, 3))
    pts[0] = (10.0, 0.0, 0.0)
    pts[1] = (-10.0, 0.0, 0.0)
    frame = grid_frame_for_object(pts, k=1.0, d=10)
    assert frame.voxel_size * 10 == pytest.approx(20.0)


# -----------------------------
#  TABLE HEIGHT
# -----------------------------
def test_table_height_flat_background():
    cam = down_camera(1.0)
    obs = DepthObservation(np.full((64, 64), 1.0), np.zeros((64, 64)))
    assert estimate_table_height(obs, cam) == pytest.approx(0.0, abs=1e-9)


def test_table_height_takes_dominant_plane():
    cam = down_camera(1.0)
    depth = np.full((64, 64), 0.3)
    depth[:19] = 0.1
    obs = DepthObservation(depth, np.zeros((64, 64)))
    assert estimate_table_height(obs, cam) == pytest.approx(0.7, abs=1e-9)


def test_table_height_with_noise():
    cam = down_camera(1.0)
    rng = np.random.default_rng(4)
    depth = 0.3 + rng.normal(0.0, 0.001, size=(64, 64))
    obs = DepthObservation(depth, np.zeros((64, 64)))
    assert estimate_table_height(obs, cam) == pytest.approx(0.7, abs=0.005)


def test_table_height_ignores_object_pixels():
    cam = down_camera(1.0)
    depth = np.full((64, 64), 0.3)
    labels = np.zeros((64, 64))
    depth[:40] = 0.1
    labels[:40] = 1
    obs = DepthObservation(depth, labels)
    assert estimate_table_height(obs, cam) == pytest.approx(0.7, abs=1e-9)


def test_table_height_needs_background():
    cam = down_camera(1.0)
    obs = DepthObservation(np.full((64, 64), 0.5), np.ones((64, 64)))
    with pytest.raises(NoBackground):
        estimate_table_height(obs, cam)


# -----------------------------
#  VOXELIZATION / CARVING
# -----------------------------
def test_voxelize_examples():
    frame = GridFrame((4, 4, 4), 1.0)
    assert voxelize(np.zeros((0, 3)), frame).count == 0
    g = voxelize(np.array([[2.0, 1.0, 3.0], [9.0, 9.0, 9.0]]), frame)
    assert g.count == 1 and g.bits[2, 1, 3]


def test_voxelize_matches_per_point_lookup():
    frame = GridFrame((8, 8, 8), 0.25, (-1.0, -1.0, 0.0))
    pts = np.random.default_rng(5).uniform(-1.2, 1.2, size=(10000, 3))
    expected = np.zeros(frame.dims, dtype=bool)
    for p in pts:
        idx = tuple(int(np.floor((p[k] - frame.origin[k] + 0.125) / 0.25)) for k in range(3))
        if all(0 <= i < 8 for i in idx):
            expected[idx] = True
    np.testing.assert_array_equal(voxelize(pts, frame).bits, expected)


def test_carve_classifies_front_and_back_of_surface():
    cam = down_camera(1.0)
    obs = DepthObservation(np.full((64, 64), 0.5), np.zeros((64, 64)))
    above = GridFrame((4, 4, 4), 0.05, (-0.075, -0.075, 0.7))
    below = GridFrame((4, 4, 4), 0.05, (-0.075, -0.075, 0.2))
    outside = GridFrame((4, 4, 4), 0.05, (5.0, 5.0, 0.2))

    empty, unobserved = carve_visibility(cam, obs, above)
    assert empty.count == 64 and unobserved.count == 0
    empty, unobserved = carve_visibility(cam, obs, below)
    assert empty.count == 0 and unobserved.count == 64
    empty, unobserved = carve_visibility(cam, obs, outside)
    assert empty.count == 0 and unobserved.count == 64


def test_carve_missing_depth_is_unobserved():
    cam = down_camera(1.0)
    obs = DepthObservation(np.zeros((64, 64)), np.zeros((64, 64)))
    frame = GridFrame((4, 4, 4), 0.05, (-0.075, -0.075, 0.7))
    empty, unobserved = carve_visibility(cam, obs, frame)
    assert empty.count == 0 and unobserved.count == 64


def test_carve_matches_ray_cast_oracle(two_box_scene):
    cam, obs, boxes = two_box_scene
    frame = GridFrame((12, 12, 12), 0.04, (-0.22, -0.22, 0.0))
    empty, unobserved = carve_visibility(cam, obs, frame)

    half = frame.voxel_size / 2.0
    for idx in np.ndindex(frame.dims):
        pc = cam.world_to_camera(frame.world_center(idx))[0]
        u = int(np.floor(cam.fx * pc[0] / pc[2] + cam.cx + 0.5))
        v = int(np.floor(cam.fy * pc[1] / pc[2] + cam.cy + 0.5))
        if not (0 <= u < cam.width and 0 <= v < cam.height):
            assert unobserved.bits[idx] and not empty.bits[idx]
            continue
        surface = _oracle_depth(cam, boxes, u, v)
        assert surface == pytest.approx(obs.depth[v, u], abs=1e-9)
        if abs(abs(pc[2] - surface) - half) < 1e-9:
            continue  # on the band edge
        expect_empty = surface > 0 and pc[2] < surface - half
        expect_band = surface > 0 and abs(pc[2] - surface) <= half
        assert empty.bits[idx] == expect_empty
        assert unobserved.bits[idx] == (not expect_empty and not expect_band)


def test_cropped_view_carves_a_subset():
    cam = down_camera(1.0)
    obs = DepthObservation(np.full((64, 64), 0.5), np.zeros((64, 64)))
    frame = GridFrame((10, 10, 4), 0.05, (-0.225, -0.225, 0.7))
    cropped_cam = CameraModel(cam.fx, cam.fy, cam.cx, cam.cy, 40, 64, cam.cam_to_world)
    cropped_obs = DepthObservation(obs.depth[:, :40], obs.labels[:, :40])
    full, _ = carve_visibility(cam, obs, frame)
    part, _ = carve_visibility(cropped_cam, cropped_obs, frame)
    assert np.all(part.bits <= full.bits)
    assert part.count < full.count


# -----------------------------
#  REPRESENTATION
# -----------------------------
def test_representation_partitions_the_grid(two_box_scene):
    cam, obs, _ = two_box_scene
    rep = build_representation(obs, cam, 1, k=4.0, d=24)
    occupied = rep.object_mask.bits | rep.others_mask.bits
    total = occupied.astype(int) + rep.empty_mask.bits + rep.unobserved_mask.bits
    assert np.all(total == 1)
    assert rep.object_mask.count > 0
    assert rep.others_mask.count > 0
    assert rep.table_source == "estimated"
    assert rep.z_table == pytest.approx(0.0, abs=0.005)
    assert rep.stack().shape == (4, 24, 24, 24)


def test_representation_of_lone_object_has_no_others():
    cam = CameraModel.look_at((0.6, 0.0, 0.5), (0.0, 0.0, 0.05), 120.0, 120.0, 47.5, 47.5, 96, 96)
    obs = render_boxes(cam, [Box((-0.05, -0.05, 0.0), (0.05, 0.05, 0.1), label=3)])
    rep = build_representation(obs, cam, 3, d=16, z_table=0.0)
    assert rep.others_mask.count == 0
    assert rep.table_source == "manifest"


def test_representation_without_background_falls_back_to_object_base():
    cam = CameraModel.look_at((0.6, 0.0, 0.5), (0.0, 0.0, 0.05), 120.0, 120.0, 47.5, 47.5, 96, 96)
    obs = render_boxes(cam, [Box((-0.05, -0.05, 0.0), (0.05, 0.05, 0.1), label=1)], table_z=None)
    rep = build_representation(obs, cam, 1, d=16)
    assert rep.table_source == "fallback_min_z"
    assert rep.z_table == pytest.approx(0.0, abs=0.02)


def test_representation_errors(two_box_scene):
    cam, obs, _ = two_box_scene
    with pytest.raises(UnknownObject):
        build_representation(obs, cam, 7, d=16)

    labels = np.array(obs.labels)
    depth = np.array(obs.depth)
    labels[0, 0] = 9
    depth[0, 0] = 0.0
    with pytest.raises(EmptyObject):
        build_representation(DepthObservation(depth, labels), cam, 9, d=16)


@pytest.mark.parametrize("seed", range(20))
def test_representation_matches_ray_cast_oracle(seed):
    cam, boxes = _random_two_box_scene(seed)
    obs = render_boxes(cam, boxes)
    rep = build_representation(obs, cam, 1, k=4.0, d=16)
    *expected, unsure = _oracle_representation(cam, obs, boxes, rep.frame, 1)
    sure = ~unsure
    assert sure.mean() > 0.95
    assert rep.object_mask.count > 0 and rep.others_mask.count > 0
    for got, want in zip(rep.channels, expected):
        np.testing.assert_array_equal(got.bits[sure], want[sure])


def test_hidden_half_of_an_object_is_unobserved():
    # the camera sits low, so box 2 hides the lower half of box 1
    boxes = [
        Box((-0.05, -0.05, 0.0), (0.05, 0.05, 0.10), label=1),
        Box((0.10, -0.10, 0.0), (0.14, 0.10, 0.07), label=2),
    ]
    cam = CameraModel.look_at((0.6, 0.0, 0.2), (0.0, 0.0, 0.05), 120.0, 120.0, 47.5, 47.5, 96, 96)
    rep = build_representation(render_boxes(cam, boxes), cam, 1, k=4.0, d=24)

    centers = rep.frame.centers()
    inside = np.all((centers > (-0.05, -0.05, -1.0)) & (centers < (0.05, 0.05, 0.03)), axis=-1)
    assert inside.sum() > 0
    assert np.all(rep.unobserved_mask.bits[inside])
    assert not np.any(rep.object_mask.bits[inside])
    assert rep.object_mask.count > 0
