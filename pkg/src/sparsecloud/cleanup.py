"""Statistical and radius outlier removal.

Both filters only drop points; coordinates and attributes of kept points are
untouched and keep their original relative order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud
from .errors import EmptyInputError, ParameterError
from .index import SpatialIndex

DEFAULT_SOR_K = 20
DEFAULT_SOR_STD = 2.0
DEFAULT_ROR_RADIUS = 0.05
DEFAULT_ROR_MIN = 5


@dataclass(frozen=True)
class CleanupReport:
    algorithm: str
    kept: int
    removed: int
    removed_indices: tuple
    params: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [
            f"algorithm {self.algorithm}",
            f"input {self.kept + self.removed}",
            f"kept {self.kept}",
            f"removed {self.removed}",
        ]
        lines += [f"param {k} {v}" for k, v in self.params.items()]
        return "\n".join(lines) + "\n"


def _report(algorithm, n, remove_mask, params):
    removed = np.flatnonzero(remove_mask)
    return CleanupReport(
        algorithm=algorithm,
        kept=n - len(removed),
        removed=len(removed),
        removed_indices=tuple(int(i) for i in removed),
        params=dict(params),
    )


def knn_mean_distances(c: PointCloud, k: int, index: SpatialIndex = None) -> np.ndarray:
    """Mean distance from each point to its ``k`` nearest other points."""
    ix = index if index is not None else SpatialIndex(c.points)
    means = np.empty(len(c))
    for i, p in enumerate(c.points):
        # self may not come first when exact duplicates have a lower index
        neigh = [d for j, d in ix.k_nearest(p, k + 1) if j != i][:k]
        means[i] = np.mean(np.array(neigh))
    return means


def statistical_outlier_removal(
    c: PointCloud, k: int = DEFAULT_SOR_K, std_ratio: float = DEFAULT_SOR_STD
):
    """Drop points whose mean k-NN distance exceeds ``mu + std_ratio * sigma``.

    ``mu`` and ``sigma`` are the mean and population standard deviation of the
    per-point means over the whole cloud.
    """
    n = len(c)
    if n < 2:
        raise EmptyInputError(f"statistical outlier removal needs >= 2 points, got {n}")
    if int(k) != k or not 1 <= k <= n - 1:
        raise ParameterError(f"k must be an integer in [1, {n - 1}], got {k}")
    if not std_ratio > 0:
        raise ParameterError(f"std_ratio must be positive, got {std_ratio}")
    means = knn_mean_distances(c, int(k))
    mu = np.mean(means)
    sigma = np.std(means)
    if sigma == 0:
        remove = np.zeros(n, dtype=bool)
    else:
        remove = means > mu + std_ratio * sigma
    report = _report("sor", n, remove, {"k": int(k), "std_ratio": float(std_ratio)})
    return c.subset(~remove), report


def radius_outlier_removal(
    c: PointCloud, radius: float = DEFAULT_ROR_RADIUS, min_neighbors: int = DEFAULT_ROR_MIN
):
    """Drop points with fewer than ``min_neighbors`` other points within ``radius``."""
    if not radius > 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    if int(min_neighbors) != min_neighbors or min_neighbors < 1:
        raise ParameterError(f"min_neighbors must be a positive integer, got {min_neighbors}")
    n = len(c)
    ix = SpatialIndex(c.points)
    counts = np.array([ix.count_within_radius(p, radius) - 1 for p in c.points], dtype=np.int64)
    remove = counts < min_neighbors
    report = _report(
        "ror", n, remove, {"radius": float(radius), "min_neighbors": int(min_neighbors)}
    )
    return c.subset(~remove), report


def sor_then_ror(
    c: PointCloud,
    k: int = DEFAULT_SOR_K,
    std_ratio: float = DEFAULT_SOR_STD,
    radius: float = DEFAULT_ROR_RADIUS,
    min_neighbors: int = DEFAULT_ROR_MIN,
):
    """SOR followed by ROR on the survivors; indices reported against the input cloud."""
    n = len(c)
    mid, r1 = statistical_outlier_removal(c, k, std_ratio)
    out, r2 = radius_outlier_removal(mid, radius, min_neighbors)
    survivors = np.setdiff1d(np.arange(n), np.array(r1.removed_indices, dtype=np.int64))
    remove = np.zeros(n, dtype=bool)
    remove[list(r1.removed_indices)] = True
    remove[survivors[list(r2.removed_indices)]] = True
    report = _report("both", n, remove, {**r1.params, **r2.params})
    return out, report
