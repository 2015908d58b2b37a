"""Point-cloud data model and accumulation of sparse patch observations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import AssociationError, InvalidInputError
from .geometry import (
    INVERSE_DEPTH_EPS,
    CameraIntrinsics,
    Pose,
    backproject_pixel,
    backproject_pixels,
)


class DepthKind(str, Enum):
    METRIC = "metric"
    INVERSE = "inverse"


def _frozen(a):
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PatchFrame:
    """Sparse observations of one frame: pixel centres, depth values, validity flags."""

    timestamp: float
    pixels: np.ndarray
    depth_values: np.ndarray
    valid: np.ndarray
    depth_kind: DepthKind = DepthKind.METRIC

    def __post_init__(self):
        ts = float(self.timestamp)
        if not math.isfinite(ts) or ts < 0:
            raise InvalidInputError(f"frame timestamp must be finite and non-negative, got {ts}")
        pixels = np.array(self.pixels, dtype=float).reshape(-1, 2)
        depth = np.array(self.depth_values, dtype=float).reshape(-1)
        valid = np.array(self.valid, dtype=bool).reshape(-1)
        if not (len(pixels) == len(depth) == len(valid)):
            raise InvalidInputError("pixels, depth_values and valid must have equal length")
        if not np.all(np.isfinite(pixels)):
            raise InvalidInputError("frame contains non-finite pixel coordinates")
        object.__setattr__(self, "timestamp", ts)
        object.__setattr__(self, "pixels", _frozen(pixels))
        object.__setattr__(self, "depth_values", _frozen(depth))
        object.__setattr__(self, "valid", _frozen(valid))
        object.__setattr__(self, "depth_kind", DepthKind(self.depth_kind))

    @classmethod
    def from_array(cls, timestamp, rows, depth_kind=DepthKind.METRIC) -> "PatchFrame":
        """Build from an (N, 4) array of ``u, v, depth_value, valid`` rows."""
        rows = np.asarray(rows, dtype=float).reshape(-1, 4)
        return cls(timestamp, rows[:, :2], rows[:, 2], rows[:, 3] != 0, depth_kind)

    def to_array(self) -> np.ndarray:
        out = np.empty((len(self), 4))
        out[:, :2] = self.pixels
        out[:, 2] = self.depth_values
        out[:, 3] = self.valid
        return out

    def __len__(self):
        return len(self.depth_values)

    @property
    def observations(self):
        return [
            Observation((float(p[0]), float(p[1])), float(d), bool(ok))
            for p, d, ok in zip(self.pixels, self.depth_values, self.valid)
        ]


class Observation(NamedTuple):
    pixel: tuple
    depth_value: float
    valid: bool


class Validation(NamedTuple):
    point: Optional[np.ndarray]
    reason: Optional[str]

    @property
    def accepted(self) -> bool:
        return self.point is not None


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered (N, 3) points plus optional per-point provenance.

    ``frame`` tags the coordinate frame ("world" or "camera").
    """

    points: np.ndarray
    source_frame_index: Optional[np.ndarray] = None
    source_timestamp: Optional[np.ndarray] = None
    frame: str = "world"

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", _frozen(pts))
        for name, dtype in (("source_frame_index", np.int64), ("source_timestamp", float)):
            attr = getattr(self, name)
            if attr is None:
                continue
            attr = np.array(attr, dtype=dtype).reshape(-1)
            if len(attr) != len(pts):
                raise InvalidInputError(
                    f"{name} has length {len(attr)}, cloud has {len(pts)} points"
                )
            object.__setattr__(self, name, _frozen(attr))

    def __len__(self):
        return len(self.points)

    @property
    def count(self) -> int:
        return len(self.points)

    def subset(self, indices) -> "PointCloud":
        """Points at ``indices`` (bool mask or index array), attributes in lockstep."""
        idx = np.asarray(indices)

        def pick(a):
            return None if a is None else a[idx]

        return PointCloud(
            self.points[idx], pick(self.source_frame_index), pick(self.source_timestamp), self.frame
        )

    def with_points(self, points) -> "PointCloud":
        return PointCloud(points, self.source_frame_index, self.source_timestamp, self.frame)


def validate_observation(obs, depth_kind, intr: CameraIntrinsics, eps=INVERSE_DEPTH_EPS) -> Validation:
    """Accept an observation and back-project it, or return a rejection reason."""
    pixel, value, valid = obs
    if not valid:
        return Validation(None, "invalid flag")
    u, v = pixel
    if not (math.isfinite(u) and math.isfinite(v)):
        return Validation(None, "non-finite pixel")
    if not math.isfinite(value):
        return Validation(None, "non-finite depth")
    if DepthKind(depth_kind) is DepthKind.INVERSE:
        if value <= eps:
            return Validation(None, "near-infinite depth")
        z = 1.0 / value
    else:
        if value <= 0:
            return Validation(None, "non-positive depth")
        z = value
    return Validation(backproject_pixel((u, v), z, intr), None)


def _accepted_depths(frame: PatchFrame, eps: float):
    """Mask of accepted observations and their metric depths (same rule as validate_observation)."""
    d = frame.depth_values
    finite = np.isfinite(d)
    if frame.depth_kind is DepthKind.INVERSE:
        ok = frame.valid & finite & (d > eps)
        with np.errstate(divide="ignore"):
            z = np.where(ok, 1.0 / np.where(ok, d, 1.0), np.nan)
    else:
        ok = frame.valid & finite & (d > 0)
        z = np.where(ok, d, np.nan)
    return ok, z[ok]


def match_frames_to_poses(frames: Sequence[PatchFrame], poses: Sequence[Pose], max_dt=None):
    """Pose for each frame, by position (``max_dt=None``) or by timestamp.

    Returns a list with one entry per frame; entries are ``None`` for frames
    left without a pose by timestamp association.
    """
    if max_dt is None:
        if len(frames) != len(poses):
            raise AssociationError(
                f"{len(frames)} frames but {len(poses)} poses; "
                "pass a timestamp tolerance to associate by time"
            )
        return list(poses)
    from .align import associate_by_timestamp

    pairs = associate_by_timestamp(
        [f.timestamp for f in frames], [p.timestamp for p in poses], max_dt
    )
    matched = [None] * len(frames)
    for i, j in pairs:
        matched[i] = poses[j]
    return matched


def accumulate_cloud(
    frames: Sequence[PatchFrame],
    poses: Sequence[Pose],
    intr: CameraIntrinsics,
    stride: int = 1,
    max_dt: Optional[float] = None,
    eps: float = INVERSE_DEPTH_EPS,
) -> PointCloud:
    """Back-project every accepted observation of every ``stride``-th frame into the world.

    Frames are paired with poses positionally unless ``max_dt`` is given, in
    which case they are associated by nearest timestamp. A selected frame
    without a pose raises :class:`AssociationError`.
    """
    if int(stride) != stride or stride < 1:
        raise InvalidInputError(f"stride must be a positive integer, got {stride}")
    matched = match_frames_to_poses(frames, poses, max_dt)
    chunks, frame_ids, stamps = [], [], []
    for i in range(0, len(frames), int(stride)):
        frame, pose = frames[i], matched[i]
        if pose is None:
            raise AssociationError(
                f"frame {i} (t={frame.timestamp}) has no pose within {max_dt} s"
            )
        ok, z = _accepted_depths(frame, eps)
        if not len(z):
            continue
        cam = backproject_pixels(frame.pixels[ok], z, intr)
        chunks.append(pose.apply(cam))
        frame_ids.append(np.full(len(z), i, dtype=np.int64))
        stamps.append(np.full(len(z), frame.timestamp))
    if not chunks:
        return PointCloud(np.empty((0, 3)), np.empty(0, np.int64), np.empty(0))
    return PointCloud(np.concatenate(chunks), np.concatenate(frame_ids), np.concatenate(stamps))


@dataclass(frozen=True)
class CloudStats:
    count: int
    bounds_min: Optional[np.ndarray]
    bounds_max: Optional[np.ndarray]
    centroid: Optional[np.ndarray]


def cloud_stats(c: PointCloud) -> CloudStats:
    if len(c) == 0:
        return CloudStats(0, None, None, None)
    p = c.points
    return CloudStats(len(c), p.min(axis=0), p.max(axis=0), p.mean(axis=0))
