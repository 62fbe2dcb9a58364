import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mocaflow.errors import DepthNonPositive
from mocaflow.geometry import (Box2D, Box3D, KittiCalibration, Mask2D, NuScenesCalibration,
                               bev_corners, bev_overlap, box3d_corners, normalize_angle,
                               points_in_box3d, project, project_kitti, project_nuscenes,
                               project_points)

from conftest import identity_kitti
from oracles import (footprint, points_in_box_bruteforce, polygon_intersection_area,
                     raster_overlap, rotation_z)


def translation(t):
    m = np.eye(4)
    m[:3, 3] = t
    return m


def nuscenes_identity(**overrides):
    mats = dict(T_ego_from_lidar=np.eye(4), T_egoC_from_egoL=np.eye(4),
                T_cam_from_ego=np.eye(4), K=np.eye(3))
    mats.update(overrides)
    return NuScenesCalibration(**mats)


class TestProjectKitti:
    def test_identity_is_pinhole_divide(self):
        px = project_kitti((2, 3, 4), identity_kitti())
        assert (px.u, px.v, px.depth) == (0.5, 0.75, 4.0)

    def test_intrinsics_by_hand(self):
        P = np.array([[100.0, 0, 50, 0], [0, 100.0, 50, 0], [0, 0, 1, 0]])
        px = project_kitti((2, 3, 4), KittiCalibration(P, np.eye(4), np.eye(4)))
        # (100*2 + 50*4) / 4 and (100*3 + 50*4) / 4
        assert (px.u, px.v, px.depth) == (100.0, 125.0, 4.0)

    def test_behind_camera(self):
        with pytest.raises(DepthNonPositive):
            project_kitti((0, 0, -1), identity_kitti())

    def test_degenerate_depth_threshold(self):
        with pytest.raises(DepthNonPositive):
            project_kitti((1, 1, 1e-7), identity_kitti())
        assert project_kitti((1, 1, 2e-6), identity_kitti()).depth == 2e-6

    def test_identity_matches_divide_on_samples(self):
        rng = np.random.default_rng(0)
        pts = np.column_stack([rng.normal(size=(500, 2)) * 10, rng.uniform(0.01, 80, 500)])
        out = project_points(pts, identity_kitti())
        np.testing.assert_array_equal(out[:, 0], pts[:, 0] / pts[:, 2])
        np.testing.assert_array_equal(out[:, 1], pts[:, 1] / pts[:, 2])

    def test_chain_order_matches_hand_product(self):
        rng = np.random.default_rng(1)
        R = np.eye(4)
        R[:3, :3] = rotation_z(0.02)
        T = translation([0.1, -0.2, 0.3])
        T[:3, :3] = rotation_z(0.5)
        P = np.array([[700.0, 0, 600, 45], [0, 700, 180, -0.3], [0, 0, 1, 0.004]])
        calib = KittiCalibration(P, R, T)
        pts = rng.uniform([1, -5, 5], [5, 5, 40], size=(50, 3))
        hom = np.hstack([pts, np.ones((50, 1))])
        ref = np.stack([P @ (R @ (T @ p)) for p in hom])
        out = project_points(pts, calib)
        np.testing.assert_allclose(out[:, 0], ref[:, 0] / ref[:, 2], rtol=1e-12)
        np.testing.assert_allclose(out[:, 1], ref[:, 1] / ref[:, 2], rtol=1e-12)
        np.testing.assert_allclose(out[:, 2], ref[:, 2], rtol=1e-12)

    def test_non_strict_marks_invalid_rows(self):
        out = project_points(np.array([[1.0, 1, 2], [1, 1, -2]]), identity_kitti(), strict=False)
        assert np.isfinite(out[0]).all()
        assert np.isnan(out[1, :2]).all() and out[1, 2] == -2


class TestProjectNuScenes:
    def test_identity_chain(self):
        px = project_nuscenes((1, 2, 5), nuscenes_identity())
        assert (px.u, px.v, px.depth) == (0.2, 0.4, 5.0)

    def test_one_translation(self):
        calib = nuscenes_identity(T_ego_from_lidar=translation([0, 0, 1]))
        px = project_nuscenes((1, 2, 4), calib)
        assert (px.u, px.v, px.depth) == (0.2, 0.4, 5.0)

    def test_zero_depth(self):
        calib = nuscenes_identity(T_cam_from_ego=translation([0, 0, -4]))
        with pytest.raises(DepthNonPositive):
            project_nuscenes((0, 0, 4), calib)

    def test_ego_pose_bridge_is_applied_between_lidar_and_camera(self):
        # a 1 m ego motion along z between the two timestamps adds 1 m depth
        calib = nuscenes_identity(T_egoC_from_egoL=translation([0, 0, 1]))
        assert project((0.0, 0.0, 4.0), calib).depth == 5.0

    def test_dispatch(self):
        assert project((2, 3, 4), identity_kitti()) == project_kitti((2, 3, 4), identity_kitti())


class TestCalibrationValidation:
    def test_rejects_non_orthonormal_rotation(self):
        T = np.eye(4)
        T[0, 0] = 1.001
        with pytest.raises(ValueError, match="orthonormal"):
            KittiCalibration(np.hstack([np.eye(3), np.zeros((3, 1))]), np.eye(4), T)

    def test_accepts_rounding_noise(self):
        T = np.eye(4)
        T[:3, :3] = rotation_z(0.3) + 1e-9
        KittiCalibration(np.hstack([np.eye(3), np.zeros((3, 1))]), np.eye(4), T)

    def test_rejects_bad_bottom_row(self):
        T = np.eye(4)
        T[3, 0] = 0.5
        with pytest.raises(ValueError, match="bottom row"):
            nuscenes_identity(T_cam_from_ego=T)

    def test_rejects_shape(self):
        with pytest.raises(ValueError):
            KittiCalibration(np.eye(3), np.eye(4), np.eye(4))

    def test_matrices_are_read_only(self):
        calib = identity_kitti()
        with pytest.raises(ValueError):
            calib.P_rect[0, 0] = 2.0


class TestBoxes:
    def test_box_validation(self):
        with pytest.raises(ValueError):
            Box3D((0, 0, 0), (1, 0, 1))
        with pytest.raises(ValueError):
            Box3D((0, 0, math.nan), (1, 1, 1))
        with pytest.raises(ValueError):
            Box2D(5, 0, 1, 3)

    def test_yaw_is_normalised(self):
        assert Box3D((0, 0, 0), (1, 1, 1), 3 * math.pi).yaw == pytest.approx(math.pi)
        assert normalize_angle(-math.pi) == pytest.approx(math.pi)
        assert -math.pi < normalize_angle(7.0) <= math.pi

    def test_box3d_dict_round_trip(self):
        b = Box3D((1.1, -2.2, 0.3), (1.7, 4.2, 1.5), 0.123456789)
        assert Box3D.from_dict(b.to_dict()) == b

    def test_unit_cube_corners(self):
        c = box3d_corners(Box3D((0, 0, 0), (1, 1, 1)))
        expected = {(x, y, z) for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)}
        assert {tuple(r) for r in c} == expected

    def test_unit_cube_quarter_turn(self):
        c = box3d_corners(Box3D((0, 0, 0), (1, 1, 1), math.pi / 2))
        got = {tuple(np.round(r, 12) + 0.0) for r in c}
        expected = {(x, y, z) for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)}
        assert got == expected

    def test_rotated_corners_match_hand_rotation(self):
        box = Box3D((0, 0, 0), (2, 4, 1), math.pi / 4)
        c, s = math.cos(math.pi / 4), math.sin(math.pi / 4)
        # l = 4 along local x, w = 2 along local y
        axis_aligned = [(2, 1), (-2, 1), (-2, -1), (2, -1)]
        expected = [(c * x - s * y, s * x + c * y) for x, y in axis_aligned]
        np.testing.assert_allclose(bev_corners(box), expected, atol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-3, 3),
           st.floats(0.1, 6), st.floats(0.1, 6), st.floats(0.1, 4), st.floats(-7, 7))
    def test_corners_centroid_and_edges(self, x, y, z, w, l, h, yaw):  # noqa: E741
        box = Box3D((x, y, z), (w, l, h), yaw)
        c = box3d_corners(box)
        np.testing.assert_allclose(c.mean(axis=0), box.center, atol=1e-9)
        tol = dict(rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(np.linalg.norm(c[0] - c[1]), l, **tol)
        np.testing.assert_allclose(np.linalg.norm(c[1] - c[2]), w, **tol)
        np.testing.assert_allclose(np.linalg.norm(c[4] - c[0]), h, **tol)

    def test_corners_match_explicit_rotation(self):
        box = Box3D((3, -1, 0.5), (1.6, 3.9, 1.5), 0.7)
        np.testing.assert_allclose(bev_corners(box), footprint((3, -1), 3.9, 1.6, 0.7), atol=1e-12)


class TestBevOverlap:
    def test_identical(self):
        b = Box3D((1, 2, 0), (1.6, 3.9, 1.5), 0.3)
        assert bev_overlap(b, b)

    def test_far_apart(self):
        assert not bev_overlap(Box3D((0, 0, 0), (4, 4, 1)), Box3D((100, 0, 0), (4, 4, 1)))

    def test_rotated_square_near_miss(self):
        # The diagonal half extent of the rotated unit square is sqrt(2)/2, so
        # with centres 1.3 apart the gap is 1.3 - 0.5 - 0.7071 = +0.093 m: the
        # footprints are disjoint. The 1 mm raster agrees.
        a = Box3D((0, 0, 0), (1, 1, 1))
        b = Box3D((1.3, 0, 0), (1, 1, 1), math.pi / 4)
        assert not raster_overlap(footprint((0, 0), 1, 1, 0), footprint((1.3, 0), 1, 1, math.pi / 4))
        assert not bev_overlap(a, b)

    def test_rotated_square_overlapping(self):
        a = Box3D((0, 0, 0), (1, 1, 1))
        b = Box3D((1.1, 0, 0), (1, 1, 1), math.pi / 4)
        assert raster_overlap(footprint((0, 0), 1, 1, 0), footprint((1.1, 0), 1, 1, math.pi / 4))
        assert bev_overlap(a, b)

    def test_touching_is_not_overlap(self):
        assert not bev_overlap(Box3D((0, 0, 0), (1, 1, 1)), Box3D((1, 0, 0), (1, 1, 1)))

    def test_height_is_ignored(self):
        assert bev_overlap(Box3D((0, 0, 0), (1, 1, 1)), Box3D((0.5, 0, 10), (1, 1, 1)))

    @settings(max_examples=300, deadline=None)
    @given(st.tuples(*[st.floats(-5, 5)] * 2, st.floats(0.2, 4), st.floats(0.2, 4), st.floats(-4, 4)),
           st.tuples(*[st.floats(-5, 5)] * 2, st.floats(0.2, 4), st.floats(0.2, 4), st.floats(-4, 4)))
    def test_symmetric(self, pa, pb):
        a = Box3D((pa[0], pa[1], 0), (pa[2], pa[3], 1), pa[4])
        b = Box3D((pb[0], pb[1], 0), (pb[2], pb[3], 1), pb[4])
        assert bev_overlap(a, b) == bev_overlap(b, a)


def random_box_pairs(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        ca = rng.uniform(-3, 3, 2)
        cb = ca + rng.uniform(-4, 4, 2)
        sa, sb = rng.uniform(0.3, 4, 2), rng.uniform(0.3, 4, 2)
        ya, yb = rng.uniform(-math.pi, math.pi, 2)
        yield (ca, sa, ya), (cb, sb, yb)


def test_bev_overlap_matches_raster_oracle():
    """10,000 random pairs against a 1 mm pixel-centre rasterisation."""
    disagreements = 0
    overlapping = 0
    for (ca, sa, ya), (cb, sb, yb) in random_box_pairs(10_000, seed=2024):
        a = Box3D((ca[0], ca[1], 0), (sa[1], sa[0], 1), ya)
        b = Box3D((cb[0], cb[1], 0), (sb[1], sb[0], 1), yb)
        pa, pb = footprint(ca, sa[0], sa[1], ya), footprint(cb, sb[0], sb[1], yb)
        got, ref = bev_overlap(a, b), raster_overlap(pa, pb)
        overlapping += ref
        if got != ref:
            area = polygon_intersection_area(pa, pb)
            assert area < 1e-4, (a, b, got, ref, area)
            disagreements += 1
    assert overlapping > 2000  # the sample exercises both outcomes
    assert disagreements < 20


class TestPointsInBox:
    def test_unit_cube(self):
        idx = points_in_box3d(np.array([[0.0, 0, 0, 0], [2, 2, 2, 0]]), Box3D((0, 0, 0), (1, 1, 1)))
        assert idx.tolist() == [0]

    def test_rotated_box(self):
        box = Box3D((0, 0, 0), (2, 2, 2), math.pi / 4)
        assert points_in_box3d(np.array([[1.2, 0, 0, 0]]), box).tolist() == [0]

    def test_empty_cloud(self):
        assert points_in_box3d(np.zeros((0, 4)), Box3D((0, 0, 0), (1, 1, 1))).size == 0

    def test_boundary_is_outside(self):
        box = Box3D((0, 0, 0), (2, 4, 2))
        assert points_in_box3d(np.array([[2.0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]]), box).size == 0

    def test_length_runs_along_heading(self):
        box = Box3D((0, 0, 0), (1, 4, 1), math.pi / 2)
        pts = np.array([[0, 1.9, 0, 0], [1.9, 0, 0, 0]], dtype=np.float64)
        assert points_in_box3d(pts, box).tolist() == [0]

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            center = rng.uniform(-5, 5, 3)
            size = rng.uniform(0.2, 5, 3)
            yaw = rng.uniform(-4, 4)
            pts = np.hstack([center + rng.uniform(-4, 4, (400, 3)), rng.random((400, 1))])
            box = Box3D(tuple(center), tuple(size), yaw)
            got = set(points_in_box3d(pts, box).tolist())
            assert got == points_in_box_bruteforce(pts, center, size, box.yaw)


class TestMask:
    def test_extent_and_bounds(self):
        bitmap = np.zeros((4, 5), bool)
        bitmap[1:3, 2:4] = True
        m = Mask2D((10, 20), bitmap)
        assert m.extent() == (10, 20, 15, 24)
        assert m.set_bounds() == (12, 21, 14, 23)

    def test_read_only_copy(self):
        bitmap = np.ones((2, 2), bool)
        m = Mask2D((0, 0), bitmap)
        bitmap[0, 0] = False
        assert m.bitmap.all()
        with pytest.raises(ValueError):
            m.bitmap[0, 0] = False

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Mask2D((0, 0), np.zeros((3, 3), bool))
