import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsecloud.errors import (
    BehindCameraError,
    InvalidDepthError,
    InvalidInputError,
    InvariantError,
    NearInfiniteDepthError,
)
from sparsecloud.geometry import (
    CameraIntrinsics,
    Pose,
    backproject_pixel,
    backproject_pixels,
    inverse_depth_to_depth,
    matrix_to_quaternion,
    pose_apply,
    pose_compose,
    pose_inverse,
    project_point,
    project_points,
    quaternion_to_matrix,
    scale_pose,
)

from oracles import random_rotation


def random_pose(rng, t_scale=5.0):
    q = rng.normal(size=4)
    return Pose(q, rng.uniform(-t_scale, t_scale, 3), float(rng.uniform(0, 100)))


def assert_same_transform(a, b, tol=1e-9):
    np.testing.assert_allclose(a.matrix, b.matrix, atol=tol)
    np.testing.assert_allclose(a.translation, b.translation, atol=tol)


class TestIntrinsics:
    def test_matrix(self, intr):
        np.testing.assert_array_equal(intr.K, [[100, 0, 50], [0, 100, 50], [0, 0, 1]])

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(fx=0.0),
            dict(fy=-1.0),
            dict(cx=100.0),
            dict(cy=-0.5),
            dict(width=0),
        ],
    )
    def test_invariants(self, kwargs):
        base = dict(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=100, height=100)
        base.update(kwargs)
        with pytest.raises(InvariantError):
            CameraIntrinsics(**base)


class TestBackprojection:
    def test_principal_point(self, intr):
        np.testing.assert_array_equal(backproject_pixel((50, 50), 2.0, intr), [0, 0, 2.0])

    def test_hand_substitution(self, intr):
        # (150 - 50) / 100 * 1 = 1
        np.testing.assert_array_equal(backproject_pixel((150, 50), 1.0, intr), [1.0, 0.0, 1.0])

    @pytest.mark.parametrize("z", [0.0, -1.0, math.inf, math.nan])
    def test_invalid_depth(self, intr, z):
        with pytest.raises(InvalidDepthError):
            backproject_pixel((50, 50), z, intr)

    def test_non_finite_pixel(self, intr):
        with pytest.raises(InvalidInputError):
            backproject_pixel((math.nan, 1.0), 1.0, intr)

    def test_vectorised_matches_scalar(self, intr, rng):
        px = rng.uniform(-20, 120, size=(50, 2))
        z = rng.uniform(0.1, 10, size=50)
        vec = backproject_pixels(px, z, intr)
        for i in range(50):
            np.testing.assert_array_equal(vec[i], backproject_pixel(px[i], z[i], intr))


class TestProjection:
    def test_round_trip(self, intr):
        pix, z = project_point(backproject_pixel((120.5, 77.25), 3.7, intr), intr)
        np.testing.assert_allclose(pix, [120.5, 77.25], atol=1e-9)
        assert abs(z - 3.7) < 1e-9

    def test_optical_axis(self, intr):
        pix, z = project_point((0, 0, 2.0), intr)
        np.testing.assert_array_equal(pix, [intr.cx, intr.cy])
        assert z == 2.0

    def test_hand_inversion(self, intr):
        pix, _ = project_point((1.0, 0.0, 1.0), intr)
        np.testing.assert_array_equal(pix, [150, 50])

    @pytest.mark.parametrize("z", [0.0, -2.0])
    def test_behind_camera(self, intr, z):
        with pytest.raises(BehindCameraError):
            project_point((0, 0, z), intr)

    def test_vectorised_flags_points_behind(self, intr):
        pix, z, front = project_points([[0, 0, 1], [0, 0, -1]], intr)
        assert front.tolist() == [True, False]
        assert np.isnan(pix[1]).all()

    @settings(max_examples=200, deadline=None)
    @given(
        u=st.floats(0, 99.99),
        v=st.floats(0, 99.99),
        z=st.floats(1e-3, 1e3),
    )
    def test_closure_property(self, u, v, z):
        intr = CameraIntrinsics(100.0, 120.0, 50.0, 40.0, 100, 100)
        pix, depth = project_point(backproject_pixel((u, v), z, intr), intr)
        assert abs(pix[0] - u) <= 1e-9 and abs(pix[1] - v) <= 1e-9
        assert abs(depth - z) <= 1e-9 * max(1.0, z)


class TestQuaternion:
    def test_orthonormal(self, rng):
        for _ in range(200):
            R = quaternion_to_matrix(rng.normal(size=4))
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
            assert abs(np.linalg.det(R) - 1) < 1e-9

    def test_matrix_round_trip(self, rng):
        for _ in range(200):
            R = random_rotation(rng)
            np.testing.assert_allclose(quaternion_to_matrix(matrix_to_quaternion(R)), R, atol=1e-12)

    def test_near_pi_rotations(self):
        for axis in np.eye(3):
            R = 2 * np.outer(axis, axis) - np.eye(3)  # 180 degrees about axis
            np.testing.assert_allclose(quaternion_to_matrix(matrix_to_quaternion(R)), R, atol=1e-12)

    def test_constructor_normalizes(self):
        p = Pose([0, 0, 0, 5.0])
        np.testing.assert_array_equal(p.rotation, [0, 0, 0, 1])

    def test_corrupt_quaternion_rejected(self):
        with pytest.raises(InvariantError):
            Pose([0, 0, 0, 1e-4])


class TestPoses:
    def test_identity_apply(self):
        np.testing.assert_array_equal(pose_apply(Pose(), [1, 2, 3]), [1, 2, 3])

    def test_half_turn_about_z(self):
        p = Pose([0, 0, 1, 0])
        np.testing.assert_allclose(pose_apply(p, [1, 0, 0]), [-1, 0, 0], atol=1e-9)

    def test_apply_inverse_round_trip(self, rng):
        for _ in range(100):
            T = random_pose(rng)
            p = rng.uniform(-10, 10, 3)
            np.testing.assert_allclose(pose_apply(pose_inverse(T), pose_apply(T, p)), p, atol=1e-9)

    def test_inverse_of_identity(self):
        inv = pose_inverse(Pose())
        assert_same_transform(inv, Pose())

    def test_inverse_of_translation(self):
        inv = pose_inverse(Pose(translation=[1, 0, 0]))
        np.testing.assert_array_equal(inv.translation, [-1, 0, 0])

    def test_compose_with_inverse_is_identity(self, rng):
        for _ in range(100):
            T = random_pose(rng)
            assert_same_transform(pose_compose(T, pose_inverse(T)), Pose())
            assert_same_transform(pose_compose(pose_inverse(T), T), Pose())

    def test_compose_identity(self, rng):
        T = random_pose(rng)
        assert_same_transform(pose_compose(Pose(), T), T)

    def test_compose_translations_add(self):
        c = pose_compose(Pose(translation=[1, 2, 3]), Pose(translation=[0.5, 0, -1]))
        np.testing.assert_array_equal(c.translation, [1.5, 2, 2])

    def test_compose_order(self, rng):
        a, b = random_pose(rng), random_pose(rng)
        p = rng.normal(size=3)
        np.testing.assert_allclose(pose_compose(a, b).apply(p), a.apply(b.apply(p)), atol=1e-9)

    def test_associativity(self, rng):
        for _ in range(100):
            A, B, C = (random_pose(rng) for _ in range(3))
            assert_same_transform(pose_compose(pose_compose(A, B), C), pose_compose(A, pose_compose(B, C)))

    def test_to_camera_inverts_apply(self, rng):
        T = random_pose(rng)
        pts = rng.normal(size=(20, 3))
        np.testing.assert_allclose(T.to_camera(T.apply(pts)), pts, atol=1e-9)

    def test_negative_timestamp_rejected(self):
        with pytest.raises(InvalidInputError):
            Pose(timestamp=-1.0)


def test_uniform_scale_invariance(rng, intr):
    """Scaling a point and the camera translation together leaves its pixel unchanged."""
    for _ in range(100):
        pose = random_pose(rng, t_scale=1.0)
        cam = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 5)])
        world = pose.apply(cam)
        s = float(rng.uniform(0.1, 10))
        pix, _ = project_point(pose.to_camera(world), intr)
        pix_s, _ = project_point(scale_pose(pose, s).to_camera(s * world), intr)
        np.testing.assert_allclose(pix_s, pix, atol=1e-9)


class TestInverseDepth:
    def test_values(self):
        assert inverse_depth_to_depth(0.5) == 2.0
        assert inverse_depth_to_depth(1.0) == 1.0

    @pytest.mark.parametrize("d", [1e-9, 0.0, -1.0, 1e-6])
    def test_near_infinite(self, d):
        with pytest.raises(NearInfiniteDepthError):
            inverse_depth_to_depth(d)


def test_per_point_intrinsics(rng):
    n = 50
    cams = SimpleNamespace(
        fx=rng.uniform(50, 500, n), fy=rng.uniform(50, 500, n), cx=rng.uniform(0, 99, n), cy=rng.uniform(0, 99, n)
    )
    px = rng.uniform(0, 100, (n, 2))
    z = rng.uniform(0.1, 10, n)
    pts = backproject_pixels(px, z, cams)
    for i in range(n):
        one = CameraIntrinsics(cams.fx[i], cams.fy[i], cams.cx[i], cams.cy[i], 100, 100)
        np.testing.assert_array_equal(pts[i], backproject_pixel(px[i], z[i], one))
    pix, depth, front = project_points(pts, cams)
    assert front.all()
    np.testing.assert_allclose(pix, px, atol=1e-9)
