import math

import numpy as np
import pytest

from sparsecloud.align import (
    IDENTITY,
    SimilarityTransform,
    apply_transform,
    associate_by_timestamp,
    estimate_trajectory_scale,
    icp_point_to_point,
    pose_density_report,
    umeyama_align,
)
from sparsecloud.cloud import PointCloud
from sparsecloud.errors import (
    DegenerateConfigurationError,
    NoOverlapError,
    OrderingError,
    PairingError,
    ParameterError,
    ParseError,
)
from sparsecloud.geometry import Pose

from oracles import random_rotation


def rotation_about(axis, deg):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    a = math.radians(deg)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(a) * K + (1 - math.cos(a)) * K @ K


def sse(T, src, dst):
    r = T.apply(src) - dst
    return float((r * r).sum())


class TestUmeyama:
    def test_identity(self, rng):
        src = rng.normal(size=(20, 3))
        T = umeyama_align(src, src)
        assert abs(T.scale - 1) < 1e-12
        np.testing.assert_allclose(T.matrix, np.eye(3), atol=1e-12)
        assert sse(T, src, src) < 1e-20

    def test_known_similarity(self, rng):
        R0 = random_rotation(rng)
        t0 = rng.normal(size=3)
        src = rng.normal(size=(50, 3))
        dst = 2 * src @ R0.T + t0
        T = umeyama_align(src, dst, with_scale=True)
        assert abs(T.scale - 2) < 1e-9
        np.testing.assert_allclose(T.matrix, R0, atol=1e-9)
        np.testing.assert_allclose(T.translation, t0, atol=1e-9)

    def test_rigid_instances(self, rng):
        for _ in range(100):
            R0 = random_rotation(rng)
            t0 = rng.uniform(-10, 10, 3)
            src = rng.normal(size=(int(rng.integers(3, 40)), 3))
            T = umeyama_align(src, src @ R0.T + t0, with_scale=False)
            assert T.scale == 1.0
            np.testing.assert_allclose(T.matrix, R0, atol=1e-9)
            np.testing.assert_allclose(T.translation, t0, atol=1e-9)
            assert abs(np.linalg.det(T.matrix) - 1) < 1e-9

    def test_reflection_excluded(self, rng):
        src = rng.normal(size=(30, 3))
        dst = src * [1, 1, -1]  # mirror image: best proper rotation is not a reflection
        T = umeyama_align(src, dst, with_scale=False)
        assert abs(np.linalg.det(T.matrix) - 1) < 1e-9

    def test_residual_optimality(self, rng):
        for _ in range(10):
            src = rng.normal(size=(40, 3))
            dst = 1.7 * src @ random_rotation(rng).T + rng.normal(size=3) + rng.normal(scale=0.05, size=(40, 3))
            T = umeyama_align(src, dst, with_scale=True)
            base = sse(T, src, dst)
            for _ in range(20):
                dR = rotation_about(rng.normal(size=3), rng.uniform(-0.5, 0.5))
                P = SimilarityTransform.from_matrix(
                    T.scale * (1 + rng.uniform(-1e-2, 1e-2)), dR @ T.matrix, T.translation + rng.normal(scale=1e-2, size=3)
                )
                assert sse(P, src, dst) >= base - 1e-12

    def test_length_mismatch(self):
        with pytest.raises(PairingError):
            umeyama_align(np.eye(3), np.eye(4, 3))

    def test_too_few(self):
        with pytest.raises(DegenerateConfigurationError):
            umeyama_align(np.eye(2, 3), np.eye(2, 3))

    def test_collinear(self):
        src = np.outer(np.arange(5.0), [1, 2, 3])
        with pytest.raises(DegenerateConfigurationError):
            umeyama_align(src, src)


class TestSimilarityTransform:
    def test_apply_scale(self):
        c = apply_transform(SimilarityTransform(scale=2.0), PointCloud([[1, 1, 1]], [4]))
        np.testing.assert_array_equal(c.points, [[2, 2, 2]])
        assert c.source_frame_index.tolist() == [4]

    def test_identity_unchanged(self, rng):
        pts = rng.normal(size=(10, 3))
        np.testing.assert_array_equal(apply_transform(IDENTITY, PointCloud(pts)).points, pts)

    def test_inverse_round_trip(self, rng):
        for _ in range(50):
            T = SimilarityTransform(rng.uniform(0.1, 10), rng.normal(size=4), rng.normal(size=3) * 5)
            pts = rng.normal(size=(20, 3))
            back = apply_transform(T.inverse(), apply_transform(T, PointCloud(pts)))
            np.testing.assert_allclose(back.points, pts, atol=1e-9)

    def test_compose(self, rng):
        A = SimilarityTransform(2.0, rng.normal(size=4), rng.normal(size=3))
        B = SimilarityTransform(0.3, rng.normal(size=4), rng.normal(size=3))
        p = rng.normal(size=(5, 3))
        np.testing.assert_allclose(A.compose(B).apply(p), A.apply(B.apply(p)), atol=1e-12)

    def test_text_round_trip(self, rng):
        T = SimilarityTransform(1.4184, rng.normal(size=4), rng.normal(size=3))
        text = T.to_text()
        assert len(text.split()) == 8
        back = SimilarityTransform.from_text(text)
        assert back.scale == T.scale
        np.testing.assert_array_equal(back.rotation, T.rotation)
        np.testing.assert_array_equal(back.translation, T.translation)

    def test_bad_text(self):
        with pytest.raises(ParseError):
            SimilarityTransform.from_text("1 0 0 0 1")

    def test_non_positive_scale(self):
        with pytest.raises(ValueError):
            SimilarityTransform(scale=0.0)


class TestIcp:
    def test_self(self, rng):
        pts = rng.normal(size=(100, 3))
        res = icp_point_to_point(PointCloud(pts), PointCloud(pts))
        assert res.inlier_rmse == 0 and res.fitness == 1.0
        np.testing.assert_allclose(res.transform.matrix, np.eye(3), atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_small_perturbation_recovered(self, seed):
        rng = np.random.default_rng(seed)
        src = rng.uniform(0, 1, size=(200, 3))
        R0 = rotation_about(rng.normal(size=3), 2.0)
        t0 = 0.005 * rng.normal(size=3) / np.sqrt(3)
        dst = src @ R0.T + t0
        res = icp_point_to_point(PointCloud(src), PointCloud(dst))
        np.testing.assert_allclose(res.transform.matrix, R0, atol=1e-6)
        np.testing.assert_allclose(res.transform.translation, t0, atol=1e-6)
        assert res.fitness == 1.0
        assert abs(np.linalg.det(res.transform.matrix) - 1) < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_rmse_non_increasing(self, seed):
        rng = np.random.default_rng(50 + seed)
        src = rng.uniform(0, 1, size=(300, 3))
        dst = src @ rotation_about(rng.normal(size=3), 3.0).T + rng.normal(scale=0.01, size=3)
        dst = dst + rng.normal(scale=0.002, size=dst.shape)
        res = icp_point_to_point(PointCloud(src), PointCloud(dst), max_distance=0.1)
        h = res.rmse_history
        assert len(h) >= 2
        assert all(b <= a + 1e-12 for a, b in zip(h, h[1:]))
        assert res.iterations <= 50

    def test_no_overlap(self, rng):
        a = rng.normal(size=(50, 3))
        with pytest.raises(NoOverlapError):
            icp_point_to_point(PointCloud(a), PointCloud(a + 100), max_distance=0.05)

    def test_scaled_init_rejected(self):
        with pytest.raises(ParameterError):
            icp_point_to_point(PointCloud(np.eye(3)), PointCloud(np.eye(3)), init=SimilarityTransform(2.0))


def stamps(ts):
    return [Pose(timestamp=t) for t in ts]


class TestAssociation:
    def test_identical(self):
        ts = [0.0, 0.1, 0.2]
        assert associate_by_timestamp(stamps(ts), stamps(ts), 0.01) == [(0, 0), (1, 1), (2, 2)]

    def test_no_pairs(self):
        assert associate_by_timestamp(stamps([0, 1]), stamps([0.4]), 0.3) == []

    def test_rates(self):
        a = [i / 10 for i in range(100)]
        b = [i / 40 for i in range(400)]
        pairs = associate_by_timestamp(a, b, 0.05)
        assert len(pairs) == 100
        assert all(abs(a[i] - b[j]) <= 0.0125 for i, j in pairs)
        assert len({j for _, j in pairs}) == 100

    def test_matches_exhaustive_oracle(self, rng):
        for _ in range(30):
            a = np.sort(rng.uniform(0, 5, int(rng.integers(1, 60)))).round(2).tolist()
            b = np.sort(rng.uniform(0, 5, int(rng.integers(1, 60)))).round(2).tolist()
            max_dt = float(rng.uniform(0, 0.2))
            used, expected = set(), []
            for i, t in enumerate(a):
                cands = [(abs(t - tb), j) for j, tb in enumerate(b) if j not in used and abs(t - tb) <= max_dt]
                if cands:
                    _, j = min(cands)
                    used.add(j)
                    expected.append((i, j))
            assert associate_by_timestamp(a, b, max_dt) == expected

    def test_exclusive(self):
        assert associate_by_timestamp([1.0, 1.0], [1.0], 0.1) == [(0, 0)]

    def test_unsorted(self):
        with pytest.raises(OrderingError):
            associate_by_timestamp([1.0, 0.0], [0.0], 0.1)


def trajectory(rng, n=60):
    return [Pose(rng.normal(size=4), rng.uniform(-5, 5, 3), i * 0.1) for i in range(n)]


class TestScale:
    def test_copy(self, rng):
        a = trajectory(rng)
        pairs = associate_by_timestamp(a, a, 0.01)
        assert abs(estimate_trajectory_scale(a, a, pairs) - 1.0) < 1e-12

    def test_reported_factor_and_reciprocal(self, rng):
        b = trajectory(rng)
        a = [Pose(rng.normal(size=4), 1.4184 * p.translation, p.timestamp) for p in b]
        pairs = associate_by_timestamp(a, b, 0.01)
        s_ab = estimate_trajectory_scale(a, b, pairs)
        s_ba = estimate_trajectory_scale(b, a, associate_by_timestamp(b, a, 0.01))
        assert abs(s_ab - 1.4184) < 5e-4
        assert abs(s_ba - 0.7050) < 5e-4
        assert abs(s_ab * s_ba - 1) < 1e-9

    def test_known_similarity(self, rng):
        b = trajectory(rng)
        T = SimilarityTransform(3.5, rng.normal(size=4), rng.normal(size=3))
        a = [Pose(p.rotation, T.apply(p.translation), p.timestamp) for p in b]
        assert abs(estimate_trajectory_scale(a, b, associate_by_timestamp(a, b, 0.01)) - 3.5) < 1e-9

    def test_collinear_still_fixes_scale(self):
        b = [Pose(translation=[i, 0, 0], timestamp=i) for i in range(5)]
        a = [Pose(translation=[2 * i, 0, 0], timestamp=i) for i in range(5)]
        assert abs(estimate_trajectory_scale(a, b, [(i, i) for i in range(5)]) - 2.0) < 1e-12

    def test_zero_spread(self):
        b = [Pose(timestamp=i) for i in range(5)]
        with pytest.raises(DegenerateConfigurationError):
            estimate_trajectory_scale(b, b, [(i, i) for i in range(5)])

    def test_too_few_pairs(self, rng):
        a = trajectory(rng, 5)
        with pytest.raises(DegenerateConfigurationError):
            estimate_trajectory_scale(a, a, [(0, 0), (1, 1)])


def test_density_ratio():
    rep = pose_density_report(4171, 985)
    assert abs(rep["ratio"] - 4.23) <= 0.01
    assert pose_density_report(985, 4171)["ratio"] == rep["ratio"]
