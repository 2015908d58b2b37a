"""Pipeline stages behind the ``sck`` command: export, convert, clean, eval, project, scale-check.

Each ``cmd_*`` function reads its inputs from files, writes its outputs
atomically and returns a small result object so the same stage can be
driven from tests without going through argparse. Failures are wrapped in
:class:`StageError`, which carries the stage name.
"""

from __future__ import annotations

import hashlib
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import cleanup as cl
from .align import (
    DEFAULT_MAX_DISTANCE,
    DEFAULT_MAX_DT,
    IcpResult,
    apply_transform,
    associate_by_timestamp,
    icp_point_to_point,
    pose_density_report,
)
from .cloud import DepthKind, PatchFrame, PointCloud, accumulate_cloud, cloud_stats, match_frames_to_poses
from .errors import AssociationError, ParameterError, SchemaError, SparseCloudError
from .formats import (
    load_frame_dataset,
    read_intrinsics,
    read_npy,
    read_pgm,
    read_ply,
    read_tum_trajectory,
    write_npy,
    write_overlay_pgm,
    write_ply,
)
from .geometry import project_points, scale_pose
from .metrics import (
    DEFAULT_THRESHOLDS,
    fit_plane_rmse,
    nearest_distances,
    scores_from_distances,
)
from .index import SpatialIndex

log = logging.getLogger(__name__)


class StageError(SparseCloudError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class _stage:
    """Context manager that re-raises failures as StageError(name)."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, StageError):
            return False
        if isinstance(exc, (SparseCloudError, OSError, ValueError)):
            raise StageError(self.name, exc) from exc
        return False


# -- file helpers ------------------------------------------------------------


def atomic_write(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def load_cloud(path) -> PointCloud:
    path = Path(path)
    data = path.read_bytes()
    if path.suffix.lower() == ".ply":
        return read_ply(data)
    arr = read_npy(data)
    if arr.shape[1] != 3:
        raise SchemaError(f"{path}: expected an (N, 3) array, got {arr.shape}")
    return PointCloud(arr.astype(float))


def cloud_bytes(cloud: PointCloud, path, encoding="binary_little_endian") -> bytes:
    if Path(path).suffix.lower() == ".ply":
        return write_ply(cloud, encoding)
    return write_npy(cloud.points, "f8")


def _vec(v) -> str:
    return " ".join(f"{x:.17g}" for x in v)


# -- configuration -----------------------------------------------------------


@dataclass
class PipelineConfig:
    dataset: Optional[Path] = None
    trajectory: Optional[Path] = None
    intrinsics: Optional[Path] = None
    out: Path = Path("out")
    name: str = "cloud"
    stride: int = 1
    depth_kind: DepthKind = DepthKind.METRIC
    max_dt: float = DEFAULT_MAX_DT
    save_frames: bool = False
    cleanup: str = "none"
    sor_k: int = cl.DEFAULT_SOR_K
    sor_std: float = cl.DEFAULT_SOR_STD
    ror_radius: float = cl.DEFAULT_ROR_RADIUS
    ror_min: int = cl.DEFAULT_ROR_MIN
    reference: Optional[Path] = None
    thresholds: tuple = DEFAULT_THRESHOLDS
    icp: bool = False
    icp_max_distance: float = DEFAULT_MAX_DISTANCE
    encoding: str = "binary_little_endian"

    def __post_init__(self):
        if int(self.stride) != self.stride or self.stride < 1:
            raise ParameterError(f"stride must be >= 1, got {self.stride}")
        t = tuple(float(x) for x in self.thresholds)
        if not t or t[0] <= 0 or any(b <= a for a, b in zip(t, t[1:])):
            raise ParameterError(f"thresholds must be positive and strictly increasing, got {t}")
        self.thresholds = t
        self.depth_kind = DepthKind(self.depth_kind)
        if self.cleanup not in ("none", "sor", "ror", "both"):
            raise ParameterError(f"unknown cleanup {self.cleanup!r}")


def _inputs(config: PipelineConfig):
    """Frame dataset, poses, intrinsics and a digest of their file contents."""
    if config.dataset is None:
        raise ParameterError("a dataset directory is required")
    ds = load_frame_dataset(config.dataset)
    traj_path = config.trajectory or ds.trajectory_path
    intr_path = config.intrinsics or ds.intrinsics_path
    if traj_path is None:
        raise ParameterError("no trajectory given and none found in the dataset")
    if intr_path is None:
        raise ParameterError("no intrinsics given and none found in the dataset")
    traj_bytes = Path(traj_path).read_bytes()
    intr_bytes = Path(intr_path).read_bytes()
    h = hashlib.sha256()
    h.update((Path(config.dataset) / "frames.txt").read_bytes())
    for e in ds.entries:
        h.update((ds.root / e.path).read_bytes())
    h.update(traj_bytes)
    h.update(intr_bytes)
    poses = read_tum_trajectory(traj_bytes.decode("utf-8"))
    intr = read_intrinsics(intr_bytes.decode("utf-8"))
    frames = list(ds.frames(config.depth_kind))
    return frames, poses, intr, h.hexdigest()


# -- export ------------------------------------------------------------------


@dataclass
class ExportResult:
    cloud: PointCloud
    npy_path: Path
    summary_path: Path
    frames_total: int
    frames_used: int
    summary: str


def export_summary(cloud, frames_total, frames_used, config, input_digest) -> str:
    st = cloud_stats(cloud)
    lines = [
        "stage export",
        f"inputs_sha256 {input_digest}",
        f"frames_total {frames_total}",
        f"frames_used {frames_used}",
        f"stride {config.stride}",
        f"depth_kind {config.depth_kind.value}",
        f"points {st.count}",
    ]
    if st.count:
        lines += [
            f"bounds_min {_vec(st.bounds_min)}",
            f"bounds_max {_vec(st.bounds_max)}",
            f"centroid {_vec(st.centroid)}",
        ]
    return "\n".join(lines) + "\n"


def cmd_export(config: PipelineConfig) -> ExportResult:
    with _stage("export"):
        frames, poses, intr, input_digest = _inputs(config)
        cloud = accumulate_cloud(frames, poses, intr, config.stride, max_dt=config.max_dt)
        out = Path(config.out)
        npy_path = out / f"{config.name}.npy"
        summary_path = out / f"{config.name}.summary.txt"
        atomic_write(npy_path, write_npy(cloud.points, "f8"))
        used = len(range(0, len(frames), config.stride))
        summary = export_summary(cloud, len(frames), used, config, input_digest)
        atomic_write(summary_path, summary)
        if config.save_frames:
            for i in range(0, len(frames), config.stride):
                pts = cloud.points[cloud.source_frame_index == i]
                atomic_write(out / "frames" / f"{config.name}_{i:06d}.npy", write_npy(pts, "f8"))
        log.info("exported %d points from %d frames", len(cloud), used)
        return ExportResult(cloud, npy_path, summary_path, len(frames), used, summary)


# -- convert -----------------------------------------------------------------


@dataclass
class ConvertResult:
    count: int
    out_path: Path
    summary: str


def cmd_convert(in_path, out_path, encoding="binary_little_endian") -> ConvertResult:
    """NPY -> PLY (or PLY -> NPY, chosen by the output suffix)."""
    with _stage("convert"):
        cloud = load_cloud(in_path)
        data = cloud_bytes(cloud, out_path, encoding)
        atomic_write(out_path, data)
        to_ply = Path(out_path).suffix.lower() == ".ply"
        note = "float32 vertex coordinates (quantised from float64)" if to_ply else "float64"
        summary = f"stage convert\npoints {len(cloud)}\noutput {Path(out_path).name}\nprecision {note}\n"
        return ConvertResult(len(cloud), Path(out_path), summary)


# -- clean -------------------------------------------------------------------


@dataclass
class CleanResult:
    cloud: PointCloud
    report: cl.CleanupReport
    out_path: Path
    report_path: Path


def report_path_for(out_path) -> Path:
    p = Path(out_path)
    return p.with_name(p.stem + ".report.txt")


def clean_cloud(cloud: PointCloud, algorithm, sor_k, sor_std, ror_radius, ror_min):
    if algorithm == "none":
        n = len(cloud)
        return cloud, cl.CleanupReport("none", n, 0, (), {})
    if algorithm == "sor":
        return cl.statistical_outlier_removal(cloud, sor_k, sor_std)
    if algorithm == "ror":
        return cl.radius_outlier_removal(cloud, ror_radius, ror_min)
    if algorithm == "both":
        return cl.sor_then_ror(cloud, sor_k, sor_std, ror_radius, ror_min)
    raise ParameterError(f"unknown cleanup algorithm {algorithm!r}")


def cmd_clean(
    in_path,
    out_path,
    algorithm="sor",
    sor_k=cl.DEFAULT_SOR_K,
    sor_std=cl.DEFAULT_SOR_STD,
    ror_radius=cl.DEFAULT_ROR_RADIUS,
    ror_min=cl.DEFAULT_ROR_MIN,
    encoding="binary_little_endian",
) -> CleanResult:
    with _stage("clean"):
        in_path, out_path = Path(in_path), Path(out_path)
        raw = in_path.read_bytes()
        cloud = load_cloud(in_path)
        cleaned, report = clean_cloud(cloud, algorithm, sor_k, sor_std, ror_radius, ror_min)
        if algorithm == "none" and in_path.suffix.lower() == out_path.suffix.lower():
            data = raw
        else:
            data = cloud_bytes(cleaned, out_path, encoding)
        atomic_write(out_path, data)
        rpath = report_path_for(out_path)
        atomic_write(rpath, f"input_sha256 {digest(raw)}\n" + report.to_text())
        return CleanResult(cleaned, report, out_path, rpath)


# -- eval --------------------------------------------------------------------


@dataclass
class EvalSection:
    label: str
    chamfer: float
    chamfer_inliers: Optional[float]
    scores: list
    plane_rmse_pred: Optional[float]
    plane_rmse_ref: Optional[float]


@dataclass
class EvalResult:
    before: EvalSection
    after: Optional[EvalSection] = None
    icp: Optional[IcpResult] = None
    icp_error: Optional[str] = None
    report: str = ""
    report_path: Optional[Path] = None
    transform_path: Optional[Path] = None


def _plane_rmse(cloud):
    try:
        return fit_plane_rmse(cloud).rmse
    except SparseCloudError:
        return None


def evaluate(pred: PointCloud, ref: PointCloud, thresholds, label, ref_index=None, inlier_distance=DEFAULT_MAX_DISTANCE):
    ref_index = ref_index if ref_index is not None else SpatialIndex(ref.points)
    d_pr = nearest_distances(pred, ref, ref_index)
    d_rp = nearest_distances(ref, pred)
    inl = d_pr[d_pr <= inlier_distance]
    return EvalSection(
        label=label,
        chamfer=float(np.mean(d_pr)),
        chamfer_inliers=float(np.mean(inl)) if len(inl) else None,
        scores=[scores_from_distances(d_pr, d_rp, t) for t in thresholds],
        plane_rmse_pred=_plane_rmse(pred),
        plane_rmse_ref=_plane_rmse(ref),
    )


def _mm(v):
    return "n/a" if v is None else f"{v * 1000:.4f}"


def _threshold_label(t):
    cm = t * 100
    return f"{cm:g} cm"


def format_section(sec: EvalSection, inlier_distance) -> str:
    lines = [
        f"[{sec.label}]",
        f"chamfer_pred_to_ref_mm {_mm(sec.chamfer)}",
        f"chamfer_pred_to_ref_inliers_mm {_mm(sec.chamfer_inliers)} (pairs within {inlier_distance * 100:g} cm)",
        f"{'threshold':<10} {'fscore':>8} {'precision':>10} {'recall':>8}",
    ]
    for s in sec.scores:
        lines.append(
            f"{_threshold_label(s.threshold):<10} {s.fscore:>8.3f} {s.precision:>10.3f} {s.recall:>8.3f}"
        )
    lines.append(f"plane_rmse_pred_mm {_mm(sec.plane_rmse_pred)}")
    lines.append(f"plane_rmse_ref_mm {_mm(sec.plane_rmse_ref)}")
    return "\n".join(lines)


def cmd_eval(
    pred_path,
    ref_path,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    icp: bool = False,
    report_path=None,
    max_distance: float = DEFAULT_MAX_DISTANCE,
) -> EvalResult:
    """Evaluate ``pred`` against ``ref``; with ``icp`` also after rigid refinement.

    An ICP failure (e.g. no overlap) is recorded in the report while the
    pre-ICP metrics are still written.
    """
    with _stage("eval"):
        raw_pred = Path(pred_path).read_bytes()
        raw_ref = Path(ref_path).read_bytes()
        pred, ref = load_cloud(pred_path), load_cloud(ref_path)
        if len(pred) == 0 or len(ref) == 0:
            raise ParameterError("evaluation needs two non-empty clouds")
        ref_index = SpatialIndex(ref.points)
        result = EvalResult(before=evaluate(pred, ref, thresholds, "before ICP", ref_index, max_distance))
        parts = [
            "# reconstruction evaluation",
            f"pred {Path(pred_path).name} sha256 {digest(raw_pred)} points {len(pred)}",
            f"ref {Path(ref_path).name} sha256 {digest(raw_ref)} points {len(ref)}",
            format_section(result.before, max_distance),
        ]
        if icp:
            try:
                res = icp_point_to_point(pred, ref, max_distance=max_distance, index=ref_index)
            except SparseCloudError as exc:
                result.icp_error = str(exc)
                parts.append(f"[after ICP]\nicp_error {exc}")
            else:
                result.icp = res
                moved = apply_transform(res.transform, pred)
                result.after = evaluate(moved, ref, thresholds, "after ICP", ref_index, max_distance)
                parts.append(
                    format_section(result.after, max_distance)
                    + f"\nicp_iterations {res.iterations}\nicp_fitness {res.fitness:.6f}"
                    + f"\nicp_inlier_rmse_mm {_mm(res.inlier_rmse)}"
                )
        result.report = "\n".join(parts) + "\n"
        if report_path is not None:
            report_path = Path(report_path)
            atomic_write(report_path, result.report)
            result.report_path = report_path
            if result.icp is not None:
                tpath = report_path.with_name(report_path.stem + ".transform.txt")
                atomic_write(tpath, result.icp.transform.to_text())
                result.transform_path = tpath
        if result.icp_error:
            log.error("ICP failed: %s", result.icp_error)
        return result


# -- project -----------------------------------------------------------------


@dataclass
class ProjectResult:
    projected: int
    total: int
    pixels: np.ndarray
    out_path: Optional[Path]


def pose_at(poses, timestamp: float, max_dt: float):
    pairs = associate_by_timestamp([timestamp], poses, max_dt)
    if not pairs:
        raise AssociationError(f"no pose within {max_dt} s of t={timestamp}")
    return poses[pairs[0][1]]


def project_cloud(cloud: PointCloud, pose, intr):
    """Pixels of points that land inside the image in front of ``pose``'s camera."""
    pix, _, front = project_points(pose.to_camera(cloud.points), intr)
    pix = pix[front]
    r = np.floor(pix + 0.5)
    inside = (r[:, 0] >= 0) & (r[:, 0] < intr.width) & (r[:, 1] >= 0) & (r[:, 1] < intr.height)
    return pix[inside]


def cmd_project(
    cloud_path,
    trajectory_path,
    intrinsics_path,
    timestamp: float,
    out_path=None,
    image_path=None,
    max_dt: float = DEFAULT_MAX_DT,
    mark_radius: int = 1,
) -> ProjectResult:
    with _stage("project"):
        cloud = load_cloud(cloud_path)
        poses = read_tum_trajectory(Path(trajectory_path).read_text(encoding="utf-8"))
        intr = read_intrinsics(Path(intrinsics_path).read_text(encoding="utf-8"))
        pose = pose_at(poses, timestamp, max_dt)
        if image_path is not None:
            base = read_pgm(Path(image_path).read_bytes())
            if base.shape != (intr.height, intr.width):
                raise ParameterError(
                    f"image is {base.shape[1]}x{base.shape[0]}, intrinsics say {intr.width}x{intr.height}"
                )
        else:
            base = np.zeros((intr.height, intr.width), dtype=np.uint8)
        pix = project_cloud(cloud, pose, intr)
        if out_path is not None:
            atomic_write(out_path, write_overlay_pgm(base, pix, mark_radius))
        log.info("projected %d of %d points", len(pix), len(cloud))
        return ProjectResult(len(pix), len(cloud), pix, Path(out_path) if out_path else None)


# -- scale check -------------------------------------------------------------


@dataclass
class ScaleCheckResult:
    scale: float
    max_discrepancy_px: float
    points: int
    frames: int
    density: Optional[dict] = None
    report: str = ""


def scale_frames(frames, s: float):
    """Frames with every depth multiplied by ``s`` (inverse depths divided)."""
    out = []
    for f in frames:
        d = f.depth_values / s if f.depth_kind is DepthKind.INVERSE else f.depth_values * s
        out.append(PatchFrame(f.timestamp, f.pixels, d, f.valid, f.depth_kind))
    return out


def reprojection_discrepancy(frames, poses, intr, s: float, stride=1, max_dt=DEFAULT_MAX_DT):
    """Max pixel gap between the original reconstruction and the one with poses and depths scaled by ``s``."""
    if not s > 0:
        raise ParameterError(f"scale must be positive, got {s}")
    scaled_poses = [scale_pose(p, s) for p in poses]
    a = accumulate_cloud(frames, poses, intr, stride, max_dt=max_dt)
    b = accumulate_cloud(scale_frames(frames, s), scaled_poses, intr, stride, max_dt=max_dt)
    matched = match_frames_to_poses(frames, poses, max_dt)
    matched_s = match_frames_to_poses(frames, scaled_poses, max_dt)
    worst = 0.0
    for pa, pb in zip(matched, matched_s):
        if pa is None:
            continue
        ua, _, front_a = project_points(pa.to_camera(a.points), intr)
        ub, _, front_b = project_points(pb.to_camera(b.points), intr)
        if np.any(front_a != front_b):
            # a point switched sides of the camera: scale invariance is broken outright
            return float("inf"), len(a)
        if np.any(front_a):
            gap = ua[front_a] - ub[front_a]
            worst = max(worst, float(np.max(np.hypot(gap[:, 0], gap[:, 1]))))
    return worst, len(a)


def cmd_scale_check(config: PipelineConfig, scale: float, density_trajectories=None, report_path=None) -> ScaleCheckResult:
    with _stage("scale-check"):
        if not scale > 0:
            raise ParameterError(f"scale must be positive, got {scale}")
        frames, poses, intr, input_digest = _inputs(config)
        worst, npts = reprojection_discrepancy(frames, poses, intr, scale, config.stride, config.max_dt)
        lines = [
            "stage scale-check",
            f"inputs_sha256 {input_digest}",
            f"scale {scale:.17g}",
            f"frames {len(frames)}",
            f"points {npts}",
            f"max_reprojection_discrepancy_px {worst:.6e}",
        ]
        density = None
        if density_trajectories:
            path_a, path_b = density_trajectories
            na = len(read_tum_trajectory(Path(path_a).read_text(encoding="utf-8")))
            nb = len(read_tum_trajectory(Path(path_b).read_text(encoding="utf-8")))
            density = pose_density_report(na, nb)
            lines += [
                f"poses_a {na}",
                f"poses_b {nb}",
                f"pose_density_ratio {density['ratio']:.4f}",
            ]
        report = "\n".join(lines) + "\n"
        if report_path is not None:
            atomic_write(report_path, report)
        return ScaleCheckResult(scale, worst, npts, len(frames), density, report)


# -- full pipeline -----------------------------------------------------------


@dataclass
class PipelineResult:
    export: ExportResult
    convert: ConvertResult
    clean: Optional[CleanResult] = None
    eval: Optional[EvalResult] = None
    files: list = field(default_factory=list)


def cmd_pipeline(config: PipelineConfig) -> PipelineResult:
    """export -> convert (PLY) -> optional clean -> optional eval against ``config.reference``."""
    exp = cmd_export(config)
    out = Path(config.out)
    ply = out / f"{config.name}.ply"
    conv = cmd_convert(exp.npy_path, ply, config.encoding)
    result = PipelineResult(exp, conv, files=[exp.npy_path, exp.summary_path, ply])
    current = ply
    if config.cleanup != "none":
        cleaned = out / f"{config.name}.clean.ply"
        result.clean = cmd_clean(
            ply, cleaned, config.cleanup, config.sor_k, config.sor_std, config.ror_radius, config.ror_min, config.encoding
        )
        result.files += [cleaned, result.clean.report_path]
        current = cleaned
    if config.reference is not None:
        rpath = out / f"{config.name}.eval.txt"
        result.eval = cmd_eval(current, config.reference, config.thresholds, config.icp, rpath, config.icp_max_distance)
        result.files.append(rpath)
    return result
