"""Similarity/rigid registration, ICP, trajectory association and scale estimation."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cloud import PointCloud
from .errors import (
    DegenerateConfigurationError,
    InvalidInputError,
    NoOverlapError,
    OrderingError,
    PairingError,
    ParameterError,
    ParseError,
)
from .geometry import matrix_to_quaternion, normalize_quaternion, quaternion_to_matrix
from .index import SpatialIndex

DEFAULT_MAX_DISTANCE = 0.05
DEFAULT_MAX_ITERATIONS = 50
DEFAULT_REL_TOL = 1e-6
DEFAULT_MAX_DT = 0.01

# rank test on singular values of the cross-covariance
_RANK_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """``p -> scale * R @ p + translation``."""

    scale: float = 1.0
    rotation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        s = float(self.scale)
        if not (math.isfinite(s) and s > 0):
            raise InvalidInputError(f"scale must be positive and finite, got {s}")
        t = np.array(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise InvalidInputError("translation must be finite")
        q = normalize_quaternion(self.rotation)
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "_R", quaternion_to_matrix(q))

    @classmethod
    def from_matrix(cls, scale, R, t) -> "SimilarityTransform":
        return cls(scale, matrix_to_quaternion(R), t)

    @property
    def matrix(self) -> np.ndarray:
        return self._R

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return self.scale * (p @ self._R.T) + self.translation

    def inverse(self) -> "SimilarityTransform":
        R_inv = self._R.T
        return SimilarityTransform.from_matrix(
            1.0 / self.scale, R_inv, -(R_inv @ self.translation) / self.scale
        )

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """Transform equal to applying ``other`` first, then ``self``."""
        return SimilarityTransform.from_matrix(
            self.scale * other.scale,
            self._R @ other.matrix,
            self.scale * (self._R @ other.translation) + self.translation,
        )

    def to_text(self) -> str:
        vals = [self.scale, *self.rotation, *self.translation]
        return " ".join(f"{v:.17g}" for v in vals) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SimilarityTransform":
        fields_ = text.split()
        if len(fields_) != 8:
            raise ParseError(f"expected 8 values 's qx qy qz qw tx ty tz', got {len(fields_)}", 1)
        try:
            v = [float(f) for f in fields_]
        except ValueError as exc:
            raise ParseError(str(exc), 1) from None
        return cls(v[0], v[1:5], v[5:8])


IDENTITY = SimilarityTransform()


def _umeyama(src, dst, with_scale: bool, require_rank: bool = True):
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    if len(src) != len(dst):
        raise PairingError(f"point lists differ in length ({len(src)} vs {len(dst)})")
    if len(src) < 3:
        raise DegenerateConfigurationError(f"need at least 3 point pairs, got {len(src)}")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    var_s = (xs * xs).sum() / len(src)
    if var_s == 0:
        raise DegenerateConfigurationError("source points have zero spread")
    cov = xd.T @ xs / len(src)
    U, d, Vt = np.linalg.svd(cov)
    if require_rank and not d[1] > _RANK_RTOL * d[0]:
        raise DegenerateConfigurationError(
            "cross-covariance is rank-deficient (collinear or coincident points)"
        )
    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2] = -1.0
    R = (U * S) @ Vt
    s = float((d * S).sum() / var_s) if with_scale else 1.0
    t = mu_d - s * (R @ mu_s)
    return s, R, t


def umeyama_align(src, dst, with_scale: bool = True) -> SimilarityTransform:
    """Closed-form least-squares (similarity or rigid) transform mapping ``src`` onto ``dst``."""
    s, R, t = _umeyama(src, dst, with_scale)
    return SimilarityTransform.from_matrix(s, R, t)


def apply_transform(t: SimilarityTransform, c: PointCloud) -> PointCloud:
    return c.with_points(t.apply(c.points))


@dataclass(frozen=True, eq=False)
class IcpResult:
    transform: SimilarityTransform
    iterations: int
    inlier_rmse: float
    fitness: float
    rmse_history: tuple = ()


def _correspond(ix: SpatialIndex, moved: np.ndarray, max_distance: float):
    idx, dist = ix.nearest_many(moved)
    keep = dist <= max_distance
    return np.flatnonzero(keep), idx[keep], dist[keep]


def icp_point_to_point(
    src: PointCloud,
    dst: PointCloud,
    init: Optional[SimilarityTransform] = None,
    max_distance: float = DEFAULT_MAX_DISTANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    rel_tol: float = DEFAULT_REL_TOL,
    index: Optional[SpatialIndex] = None,
) -> IcpResult:
    """Rigid point-to-point ICP of ``src`` into the frame of ``dst``.

    Each iteration matches every transformed source point to its nearest
    destination point, drops pairs farther than ``max_distance`` and re-solves
    the rigid transform from the original source coordinates. ``rmse_history``
    holds the inlier RMSE measured at the start of each iteration.
    """
    init = IDENTITY if init is None else init
    if init.scale != 1.0:
        raise ParameterError("ICP initial transform must be rigid (scale 1)")
    if not max_distance > 0:
        raise ParameterError(f"max_distance must be positive, got {max_distance}")
    if max_iterations < 1:
        raise ParameterError(f"max_iterations must be >= 1, got {max_iterations}")
    src_pts = src.points if isinstance(src, PointCloud) else np.asarray(src, float).reshape(-1, 3)
    dst_pts = dst.points if isinstance(dst, PointCloud) else np.asarray(dst, float).reshape(-1, 3)
    if len(src_pts) == 0 or len(dst_pts) == 0:
        raise InvalidInputError("ICP needs non-empty source and destination clouds")
    ix = index if index is not None else SpatialIndex(dst_pts)

    T = init
    history = []
    iterations = 0
    for _ in range(max_iterations):
        s_idx, d_idx, dist = _correspond(ix, T.apply(src_pts), max_distance)
        if len(s_idx) == 0:
            raise NoOverlapError(
                f"no correspondences within {max_distance} m at iteration {iterations}"
            )
        rmse = float(np.sqrt(np.mean(dist * dist)))
        if history:
            prev = history[-1]
            if rmse == 0 or abs(prev - rmse) < rel_tol * prev:
                history.append(rmse)
                break
        history.append(rmse)
        if rmse == 0:
            break
        try:
            _, R, t = _umeyama(src_pts[s_idx], dst_pts[d_idx], with_scale=False)
        except DegenerateConfigurationError:
            break
        candidate = SimilarityTransform.from_matrix(1.0, R, t)
        iterations += 1
        T = candidate

    s_idx, _, dist = _correspond(ix, T.apply(src_pts), max_distance)
    if len(s_idx) == 0:
        raise NoOverlapError(f"no correspondences within {max_distance} m after ICP")
    return IcpResult(
        transform=T,
        iterations=iterations,
        inlier_rmse=float(np.sqrt(np.mean(dist * dist))),
        fitness=len(s_idx) / len(src_pts),
        rmse_history=tuple(history),
    )


def _timestamps(items) -> list:
    return [float(getattr(x, "timestamp", x)) for x in items]


def associate_by_timestamp(a: Sequence, b: Sequence, max_dt: float = DEFAULT_MAX_DT):
    """Greedy exclusive nearest-timestamp pairing.

    ``a`` and ``b`` are sequences of poses (or bare timestamps), each sorted
    by time. Walking ``a`` in order, each entry takes the closest unused entry
    of ``b`` within ``max_dt``; equal gaps go to the lower ``b`` index.
    Returns ``(i, j)`` pairs sorted by ``i``.
    """
    ta, tb = _timestamps(a), _timestamps(b)
    for name, ts in (("a", ta), ("b", tb)):
        for k in range(1, len(ts)):
            if ts[k] < ts[k - 1]:
                raise OrderingError(f"timestamps of {name} decrease at index {k}")
    if max_dt < 0:
        raise ParameterError("max_dt must be non-negative")
    used = [False] * len(tb)
    pairs = []
    for i, t in enumerate(ta):
        pos = bisect.bisect_left(tb, t)
        best = None
        j = pos - 1
        while j >= 0 and t - tb[j] <= max_dt:
            if not used[j]:
                # duplicate timestamps: prefer the lowest unused index
                while j > 0 and tb[j - 1] == tb[j] and not used[j - 1]:
                    j -= 1
                best = (t - tb[j], j)
                break
            j -= 1
        j = pos
        while j < len(tb) and tb[j] - t <= max_dt:
            if not used[j]:
                cand = (tb[j] - t, j)
                # left candidate already has the lower index
                if best is None or cand[0] < best[0]:
                    best = cand
                break
            j += 1
        if best is not None:
            used[best[1]] = True
            pairs.append((i, best[1]))
    return pairs


def estimate_trajectory_scale(a: Sequence, b: Sequence, pairs) -> float:
    """Scale factor mapping ``b``'s translations onto ``a``'s over associated pairs."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise DegenerateConfigurationError(f"need at least 3 associated pairs, got {len(pairs)}")
    ta = np.array([a[i].translation for i, _ in pairs])
    tb = np.array([b[j].translation for _, j in pairs])
    # collinear trajectories still fix the scale, so only zero spread is fatal
    s, _, _ = _umeyama(tb, ta, with_scale=True, require_rank=False)
    if not s > 0:
        raise DegenerateConfigurationError("target translations have zero spread")
    return s


def pose_density_report(count_a: int, count_b: int) -> dict:
    """Pose counts of two trajectories and the denser/sparser ratio."""
    if count_a <= 0 or count_b <= 0:
        raise ParameterError("pose counts must be positive")
    return {
        "count_a": int(count_a),
        "count_b": int(count_b),
        "ratio": max(count_a, count_b) / min(count_a, count_b),
    }
