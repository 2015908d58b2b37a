"""Reconstruction quality metrics: one-directional Chamfer, P/R/F-score, plane RMSE."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cloud import PointCloud
from .errors import DegenerateConfigurationError, EmptyInputError, ParameterError
from .index import SpatialIndex

DEFAULT_THRESHOLDS = (0.01, 0.02, 0.05, 0.10)

# relative eigenvalue floor below which the point set has no planar extent
_PLANE_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class ThresholdScores:
    threshold: float
    precision: float
    recall: float
    fscore: float


@dataclass(frozen=True, eq=False)
class PlaneFit:
    normal: np.ndarray
    offset: float
    rmse: float
    count: int


def fscore(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (0 when both are 0)."""
    total = precision + recall
    return 2.0 * precision * recall / total if total > 0 else 0.0


def _pts(c) -> np.ndarray:
    return c.points if isinstance(c, PointCloud) else np.asarray(c, float).reshape(-1, 3)


def nearest_distances(a, b, index: Optional[SpatialIndex] = None) -> np.ndarray:
    """Distance from every point of ``a`` to its nearest point in ``b``."""
    pa, pb = _pts(a), _pts(b)
    if len(pa) == 0 or len(pb) == 0:
        raise EmptyInputError("distance queries need two non-empty clouds")
    ix = index if index is not None else SpatialIndex(pb)
    return ix.nearest_many(pa)[1]


def chamfer_one_directional(a, b) -> float:
    """Mean distance from each point of ``a`` to its nearest neighbour in ``b``."""
    # np.mean uses pairwise summation
    return float(np.mean(nearest_distances(a, b)))


def _check_threshold(t):
    if not t > 0:
        raise ParameterError(f"threshold must be positive, got {t}")


def scores_from_distances(pred_to_ref, ref_to_pred, threshold: float) -> ThresholdScores:
    _check_threshold(threshold)
    p = np.count_nonzero(pred_to_ref <= threshold) / len(pred_to_ref)
    r = np.count_nonzero(ref_to_pred <= threshold) / len(ref_to_pred)
    return ThresholdScores(float(threshold), float(p), float(r), fscore(p, r))


def precision_recall_fscore(pred, ref, threshold: float) -> ThresholdScores:
    """Precision (pred within threshold of ref), recall (ref within threshold of pred), F."""
    _check_threshold(threshold)
    return scores_from_distances(nearest_distances(pred, ref), nearest_distances(ref, pred), threshold)


def scores_over_thresholds(pred, ref, thresholds: Sequence[float] = DEFAULT_THRESHOLDS):
    d_pr = nearest_distances(pred, ref)
    d_rp = nearest_distances(ref, pred)
    return [scores_from_distances(d_pr, d_rp, t) for t in thresholds]


def fit_plane_rmse(c) -> PlaneFit:
    """Total-least-squares plane ``normal . p = offset`` and RMS point-to-plane residual.

    The normal is the least-variance principal direction of the centred
    covariance, signed so that ``offset >= 0``.
    """
    p = _pts(c)
    if len(p) < 3:
        raise DegenerateConfigurationError(f"plane fit needs >= 3 points, got {len(p)}")
    centroid = p.mean(axis=0)
    x = p - centroid
    cov = x.T @ x / len(p)
    evals, evecs = np.linalg.eigh(cov)
    if not evals[1] > _PLANE_RANK_RTOL * max(evals[2], np.finfo(float).tiny):
        raise DegenerateConfigurationError("points are collinear or coincident")
    n = evecs[:, 0]
    n = n / np.linalg.norm(n)
    offset = float(n @ centroid)
    if offset < 0 or (offset == 0 and n[np.flatnonzero(n)[0]] < 0):
        n, offset = -n, -offset
    residuals = p @ n - offset
    rmse = float(np.sqrt(np.mean(residuals * residuals)))
    return PlaneFit(n, offset, rmse, len(p))
