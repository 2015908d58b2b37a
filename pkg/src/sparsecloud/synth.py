"""Synthetic planar "board" scenes for tests and acceptance runs.

A board lying on a plane carries printed shapes (outer border, square,
circle, diamond). Their boundaries are sampled into edge points, which is
where an event camera would fire. A camera sweeps an arc in front of the
board while looking at it, and each frame observes every edge point as a
pixel plus a depth.

Randomness comes only from ``numpy.random.Generator(PCG64(seed))``, with
draws taken in a fixed order, so one seed always reproduces the same bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .cloud import DepthKind, PatchFrame
from .errors import SceneConfigurationError
from .formats import (
    write_frame_dataset,
    write_intrinsics,
    write_npy,
    write_ply,
    write_tum_trajectory,
)
from .geometry import CameraIntrinsics, Pose

DEFAULT_INTRINSICS = CameraIntrinsics(400.0, 400.0, 319.5, 239.5, 640, 480)


@dataclass(frozen=True)
class SyntheticScene:
    plane_normal: tuple = (0.0, 0.0, 1.0)
    plane_offset: float = 2.0
    board_size: tuple = (0.6, 0.45)
    edge_spacing: float = 0.02
    arc_radius: float = 1.5
    arc_sweep_deg: float = 30.0
    vertical_wobble: float = 0.05
    pose_count: int = 20
    look_at: Optional[tuple] = None
    frame_dt: float = 0.05
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    depth_kind: DepthKind = DepthKind.METRIC
    pixel_sigma: float = 0.0
    depth_sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_offset: float = 1.0
    seed: int = 0


def noisy_preset(**overrides) -> SyntheticScene:
    """Scene with mild pixel/depth noise and 5% gross outliers within 1 m."""
    params = dict(pixel_sigma=0.3, depth_sigma=0.005, outlier_fraction=0.05, outlier_offset=1.0, seed=7)
    params.update(overrides)
    return SyntheticScene(**params)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    scene: SyntheticScene
    poses: list
    edge_points: np.ndarray
    frames: list
    labels: np.ndarray  # True for injected outliers, in export order
    plane_normal: np.ndarray
    plane_offset: float

    def edge_pixels(self, frame_index: int) -> np.ndarray:
        """Noise-free pixel positions of all edge points in one frame."""
        return _project(self.scene.intrinsics, self.poses[frame_index].to_camera(self.edge_points))


def _board_basis(normal):
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - (a @ n) * n
    e1 /= np.linalg.norm(e1)
    return n, e1, np.cross(n, e1)


def _polyline(vertices, spacing):
    pts = []
    closed = list(vertices) + [vertices[0]]
    for p, q in zip(closed[:-1], closed[1:]):
        p, q = np.asarray(p, float), np.asarray(q, float)
        steps = max(1, int(round(np.linalg.norm(q - p) / spacing)))
        t = np.arange(steps) / steps
        pts.append(p + t[:, None] * (q - p))
    return np.concatenate(pts)


def board_edges_2d(scene: SyntheticScene) -> np.ndarray:
    """Edge samples in board coordinates (metres, origin at the board centre)."""
    w, h = scene.board_size[0] / 2, scene.board_size[1] / 2
    sp = scene.edge_spacing
    border = _polyline([(-w, -h), (w, -h), (w, h), (-w, h)], sp)
    s = 0.12 * h / 0.225
    square = _polyline(
        [(-0.15 - s / 2, 0.08 - s / 2), (-0.15 + s / 2, 0.08 - s / 2), (-0.15 + s / 2, 0.08 + s / 2), (-0.15 - s / 2, 0.08 + s / 2)],
        sp,
    )
    r = 0.07 * h / 0.225
    n_circle = max(8, int(round(2 * np.pi * r / sp)))
    ang = 2 * np.pi * np.arange(n_circle) / n_circle
    circle = np.column_stack([0.15 + r * np.cos(ang), 0.08 + r * np.sin(ang)])
    d = 0.08 * h / 0.225
    diamond = _polyline([(0.0, -0.1 - d), (d, -0.1), (0.0, -0.1 + d), (-d, -0.1)], sp)
    return np.concatenate([border, square, circle, diamond])


def scene_poses(scene: SyntheticScene) -> list:
    if scene.pose_count < 2:
        raise SceneConfigurationError("need at least 2 poses")
    n, e1, e2 = _board_basis(scene.plane_normal)
    centre = n * scene.plane_offset
    target = centre if scene.look_at is None else np.asarray(scene.look_at, float)
    half = np.deg2rad(scene.arc_sweep_deg) / 2
    poses = []
    for k in range(scene.pose_count):
        frac = k / (scene.pose_count - 1)
        theta = -half + 2 * half * frac
        pos = (
            centre
            + scene.arc_radius * (-np.cos(theta) * n + np.sin(theta) * e1)
            + scene.vertical_wobble * np.sin(2 * np.pi * frac) * e2
        )
        z_c = target - pos
        z_c /= np.linalg.norm(z_c)
        x_c = np.cross(e2, z_c)
        x_c /= np.linalg.norm(x_c)
        y_c = np.cross(z_c, x_c)
        R = np.column_stack([x_c, y_c, z_c])  # camera axes expressed in world
        poses.append(Pose.from_matrix(R, pos, k * scene.frame_dt))
    return poses


def _project(intr, cam):
    return np.column_stack(
        [intr.fx * cam[:, 0] / cam[:, 2] + intr.cx, intr.fy * cam[:, 1] / cam[:, 2] + intr.cy]
    )


def generate_scene(scene: SyntheticScene) -> GroundTruth:
    """Build ground truth and per-frame observations in memory."""
    rng = np.random.Generator(np.random.PCG64(scene.seed))
    n, e1, e2 = _board_basis(scene.plane_normal)
    centre = n * scene.plane_offset
    uv = board_edges_2d(scene)
    edges = centre + uv[:, :1] * e1 + uv[:, 1:] * e2
    poses = scene_poses(scene)
    intr = scene.intrinsics
    frames, labels = [], []
    for k, pose in enumerate(poses):
        cam = pose.to_camera(edges)
        if np.any(cam[:, 2] <= 0):
            raise SceneConfigurationError(f"board is behind the camera at pose {k}")
        pix = _project(intr, cam)
        inside = (pix[:, 0] >= 0) & (pix[:, 0] < intr.width) & (pix[:, 1] >= 0) & (pix[:, 1] < intr.height)
        if not np.all(inside):
            raise SceneConfigurationError(f"board leaves the image at pose {k}")
        z = cam[:, 2].copy()
        if scene.pixel_sigma > 0:
            pix = pix + rng.normal(0.0, scene.pixel_sigma, size=pix.shape)
        if scene.depth_sigma > 0:
            # log-normal multiplicative noise with std of roughly depth_sigma metres
            z = z * np.exp(rng.normal(0.0, 1.0, size=len(z)) * (scene.depth_sigma / z))
        is_out = rng.random(len(z)) < scene.outlier_fraction
        for i in np.flatnonzero(is_out):
            while True:
                off = rng.uniform(-scene.outlier_offset, scene.outlier_offset, size=3)
                p = pose.to_camera(edges[i] + off)
                if p[2] > 0.1:
                    break
            pix[i] = _project(intr, p[None])[0]
            z[i] = p[2]
        depth = 1.0 / z if scene.depth_kind is DepthKind.INVERSE else z
        frames.append(PatchFrame(pose.timestamp, pix, depth, np.ones(len(z), bool), scene.depth_kind))
        labels.append(is_out)
    return GroundTruth(
        scene=scene,
        poses=poses,
        edge_points=edges,
        frames=frames,
        labels=np.concatenate(labels),
        plane_normal=n,
        plane_offset=float(scene.plane_offset),
    )


def generate_dataset(scene: SyntheticScene, root) -> GroundTruth:
    """Write a frame-data directory plus ``ground_truth.ply`` and ``labels.npy``."""
    gt = generate_scene(scene)
    root = Path(root)
    write_frame_dataset(
        root,
        gt.frames,
        intrinsics_text=write_intrinsics(scene.intrinsics),
        trajectory_text=write_tum_trajectory(gt.poses),
    )
    (root / "ground_truth.ply").write_bytes(write_ply(gt.edge_points, "binary_little_endian"))
    (root / "labels.npy").write_bytes(write_npy(gt.labels.astype(float)[:, None], "f8"))
    return gt


