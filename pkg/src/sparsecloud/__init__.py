"""Turn sparse visual-odometry observations into world-frame point clouds,
clean them, and score them against reference reconstructions."""

from .align import (
    IcpResult,
    SimilarityTransform,
    apply_transform,
    associate_by_timestamp,
    estimate_trajectory_scale,
    icp_point_to_point,
    umeyama_align,
)
from .cleanup import CleanupReport, radius_outlier_removal, statistical_outlier_removal
from .cloud import DepthKind, PatchFrame, PointCloud, accumulate_cloud, cloud_stats, validate_observation
from .geometry import (
    CameraIntrinsics,
    Pose,
    backproject_pixel,
    inverse_depth_to_depth,
    pose_apply,
    pose_compose,
    pose_inverse,
    project_point,
)
from .index import SpatialIndex, build_index
from .metrics import (
    PlaneFit,
    ThresholdScores,
    chamfer_one_directional,
    fit_plane_rmse,
    precision_recall_fscore,
)

__version__ = "0.1.0"
