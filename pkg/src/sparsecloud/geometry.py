"""Pinhole camera model, rigid poses and depth conversions.

Conventions used throughout the package:

* Poses are camera-to-world: ``p_world = R @ p_camera + t``.
* Quaternions are Hamilton, stored as ``(qx, qy, qz, qw)``.
* Pixels are continuous ``(u, v)`` = (column, row); no bounds checks happen
  here because patch centres may sit on the image border.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCameraError,
    InvalidDepthError,
    InvalidInputError,
    InvariantError,
    NearInfiniteDepthError,
)

INVERSE_DEPTH_EPS = 1e-6
_MIN_QUAT_NORM = 1e-3


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            if not math.isfinite(getattr(self, name)):
                raise InvariantError(f"{name} must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise InvariantError(f"focal lengths must be positive (fx={self.fx}, fy={self.fy})")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise InvariantError("width and height must be integers")
        if self.width <= 0 or self.height <= 0:
            raise InvariantError("width and height must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvariantError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} sensor"
            )
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


def normalize_quaternion(q) -> np.ndarray:
    # plain floats: this runs once per pose, and trajectories hold many thousands
    x, y, z, w = (float(c) for c in np.asarray(q, dtype=float).reshape(4))
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z) and math.isfinite(w)):
        raise InvalidInputError("quaternion has non-finite components")
    n = math.sqrt(x * x + y * y + z * z + w * w)
    if n < _MIN_QUAT_NORM:
        raise InvariantError(f"quaternion norm {n:.3g} too small; treated as corrupt")
    return np.array([x / n, y / n, z / n, w / n])


def quaternion_to_matrix(q) -> np.ndarray:
    """Rotation matrix of a quaternion ``(x, y, z, w)`` (normalised first)."""
    return _unit_quaternion_matrix(*normalize_quaternion(q))


def _unit_quaternion_matrix(x, y, z, w) -> np.ndarray:
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quaternion(R) -> np.ndarray:
    """Unit quaternion ``(x, y, z, w)`` of a proper rotation matrix, with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    # branch on the largest diagonal term for numerical stability
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s, 0.25 * s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s, (R[2, 1] - R[1, 2]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s, (R[0, 2] - R[2, 0]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s, (R[1, 0] - R[0, 1]) / s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[3] < 0 else q


def quaternion_multiply(a, b) -> np.ndarray:
    """Hamilton product ``a * b`` (rotation b applied first)."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ]
    )


@dataclass(frozen=True, eq=False)
class Pose:
    """Timestamped camera-to-world rigid transform."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    timestamp: float = 0.0

    def __post_init__(self):
        q = normalize_quaternion(self.rotation)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not all(math.isfinite(v) for v in t.tolist()):
            raise InvalidInputError("pose translation must be finite")
        ts = float(self.timestamp)
        if not math.isfinite(ts) or ts < 0:
            raise InvalidInputError(f"pose timestamp must be finite and non-negative, got {ts}")
        q.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "timestamp", ts)
        object.__setattr__(self, "_R", _unit_quaternion_matrix(*q.tolist()))
        self._R.flags.writeable = False

    @classmethod
    def from_matrix(cls, R, t, timestamp=0.0) -> "Pose":
        return cls(matrix_to_quaternion(R), t, timestamp)

    @property
    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix."""
        return self._R

    def apply(self, points) -> np.ndarray:
        """Map camera-frame point(s), shape (3,) or (N, 3), to the world frame."""
        p = np.asarray(points, dtype=float)
        return p @ self._R.T + self.translation

    def to_camera(self, points) -> np.ndarray:
        """Map world-frame point(s) into this camera's frame."""
        p = np.asarray(points, dtype=float)
        return (p - self.translation) @ self._R

    def __repr__(self):
        return (
            f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()}, "
            f"timestamp={self.timestamp})"
        )


def pose_apply(pose: Pose, p) -> np.ndarray:
    return pose.apply(p)


def pose_inverse(pose: Pose) -> Pose:
    R_inv = pose.matrix.T
    q = pose.rotation
    return Pose([-q[0], -q[1], -q[2], q[3]], -R_inv @ pose.translation, pose.timestamp)


def pose_compose(a: Pose, b: Pose) -> Pose:
    """Pose equivalent to applying ``b`` first, then ``a``. Keeps ``b``'s timestamp."""
    q = quaternion_multiply(a.rotation, b.rotation)
    t = a.matrix @ b.translation + a.translation
    return Pose(q, t, b.timestamp)


def scale_pose(pose: Pose, s: float) -> Pose:
    """Same rotation, translation multiplied by ``s``."""
    return Pose(pose.rotation, pose.translation * s, pose.timestamp)


def backproject_pixel(px, depth: float, intr: CameraIntrinsics) -> np.ndarray:
    """Camera-frame 3D point of pixel ``(u, v)`` observed at metric depth ``z``."""
    u, v = (float(c) for c in px)
    if not (math.isfinite(u) and math.isfinite(v)):
        raise InvalidInputError(f"pixel ({u}, {v}) is not finite")
    z = float(depth)
    if not math.isfinite(z) or z <= 0:
        raise InvalidDepthError(f"depth must be positive and finite, got {z}")
    return np.array([(u - intr.cx) / intr.fx * z, (v - intr.cy) / intr.fy * z, z])


def _per_point(intr, n):
    return [np.broadcast_to(np.asarray(v, dtype=float), (n,)) for v in (intr.fx, intr.fy, intr.cx, intr.cy)]


def backproject_pixels(pixels, depths, intr: CameraIntrinsics) -> np.ndarray:
    """Vectorised back-projection; inputs must already be validated.

    ``intr`` may also carry ``(N,)`` arrays for fx, fy, cx, cy (one camera per point).
    """
    pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
    z = np.asarray(depths, dtype=float).reshape(-1)
    fx, fy, cx, cy = _per_point(intr, len(z))
    out = np.empty((len(z), 3))
    out[:, 0] = (pixels[:, 0] - cx) / fx * z
    out[:, 1] = (pixels[:, 1] - cy) / fy * z
    out[:, 2] = z
    return out


def project_point(p, intr: CameraIntrinsics):
    """Return ``(pixel, depth)`` for a camera-frame point in front of the camera."""
    x, y, z = (float(c) for c in p)
    if not z > 0:
        raise BehindCameraError(f"point has z={z}; must be in front of the camera")
    return np.array([intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy]), z


def project_points(points, intr: CameraIntrinsics):
    """Vectorised projection.

    Returns ``(pixels, depths, in_front)``; pixels of points with ``z <= 0`` are NaN.
    Like :func:`backproject_pixels`, accepts per-point intrinsics arrays.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    z = p[:, 2]
    in_front = z > 0
    fx, fy, cx, cy = (v[in_front] for v in _per_point(intr, len(p)))
    pixels = np.full((len(p), 2), np.nan)
    zf = z[in_front]
    pixels[in_front, 0] = fx * p[in_front, 0] / zf + cx
    pixels[in_front, 1] = fy * p[in_front, 1] / zf + cy
    return pixels, z.copy(), in_front


def inverse_depth_to_depth(d: float, eps: float = INVERSE_DEPTH_EPS) -> float:
    d = float(d)
    if not math.isfinite(d):
        raise InvalidDepthError(f"inverse depth must be finite, got {d}")
    if d <= eps:
        # rejected rather than clamped: clamping would invent far-away structure
        raise NearInfiniteDepthError(f"inverse depth {d} <= {eps}")
    return 1.0 / d
