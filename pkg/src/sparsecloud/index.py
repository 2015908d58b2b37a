"""Exact 3D nearest-neighbour index (balanced k-d tree with leaf buckets).

Query results are bit-identical to a linear scan that computes
``sqrt(dx*dx + dy*dy + dz*dz)`` and orders by ``(distance, index)``.
Pruning only discards a subtree whose splitting-plane gap is strictly larger
than the current bound, so ties at the bound are still visited and resolved
by lowest index.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .cloud import PointCloud
from .errors import InvalidInputError

LEAF_SIZE = 16


def point_distances(points: np.ndarray, q) -> np.ndarray:
    """Euclidean distances from ``q`` to each row of ``points`` (fixed summation order)."""
    dx = points[:, 0] - q[0]
    dy = points[:, 1] - q[1]
    dz = points[:, 2] - q[2]
    return np.sqrt(dx * dx + dy * dy + dz * dz)


def _as_points(c) -> np.ndarray:
    if isinstance(c, PointCloud):
        return c.points
    return np.asarray(c, dtype=float).reshape(-1, 3)


def _check_query(q):
    q = np.asarray(q, dtype=float).reshape(3)
    if not np.all(np.isfinite(q)):
        raise InvalidInputError(f"query point {q.tolist()} is not finite")
    return q


class SpatialIndex:
    """Immutable k-d tree over a point set.

    Internal nodes split at the median of the widest-spread axis. Leaves hold
    up to ``LEAF_SIZE`` points stored contiguously in ``_pts``; ``_ids`` maps
    those rows back to the caller's point indices.
    """

    def __init__(self, points, leaf_size: int = LEAF_SIZE):
        pts = np.array(_as_points(points), dtype=float)
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("cannot index a cloud with non-finite points")
        self.n = len(pts)
        self._source = pts
        self._source.flags.writeable = False
        # node arrays: axis (-1 for leaves), split value, children, leaf range
        self._axis: list[int] = []
        self._split: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._start: list[int] = []
        self._stop: list[int] = []
        order = np.arange(self.n)
        self._leaf_size = max(1, int(leaf_size))
        ids: list[np.ndarray] = []
        if self.n:
            self._build(pts, order, ids)
        self._ids = np.concatenate(ids) if ids else np.empty(0, dtype=np.int64)
        self._pts = pts[self._ids]

    def _new_node(self):
        for lst, v in (
            (self._axis, -1),
            (self._split, 0.0),
            (self._left, -1),
            (self._right, -1),
            (self._start, 0),
            (self._stop, 0),
        ):
            lst.append(v)
        return len(self._axis) - 1

    def _build(self, pts, idx, ids):
        node = self._new_node()
        sub = pts[idx]
        spread = sub.max(axis=0) - sub.min(axis=0) if len(idx) else np.zeros(3)
        if len(idx) <= self._leaf_size or spread.max() == 0:
            start = sum(len(a) for a in ids)
            ids.append(idx)
            self._start[node] = start
            self._stop[node] = start + len(idx)
            return node
        axis = int(np.argmax(spread))
        # stable sort keeps equal coordinates in index order -> deterministic tree
        order = np.argsort(sub[:, axis], kind="stable")
        idx = idx[order]
        mid = len(idx) // 2
        self._axis[node] = axis
        self._split[node] = float(pts[idx[mid], axis])
        self._left[node] = self._build(pts, idx[:mid], ids)
        self._right[node] = self._build(pts, idx[mid:], ids)
        return node

    @property
    def points(self) -> np.ndarray:
        return self._source

    def __len__(self):
        return self.n

    # -- queries -----------------------------------------------------------

    def k_nearest(self, q, k: int):
        """``min(k, N)`` pairs ``(index, distance)`` sorted by distance, then index."""
        if int(k) != k or k < 1:
            raise InvalidInputError(f"k must be a positive integer, got {k}")
        q = _check_query(q)
        if self.n == 0:
            return []
        k = int(min(k, self.n))
        heap: list = []  # max-heap on (distance, index) via negation
        bound = math.inf
        stack = [(0, 0.0)]
        axis_, split_, left_, right_ = self._axis, self._split, self._left, self._right
        while stack:
            node, gap = stack.pop()
            if gap > bound:
                continue
            axis = axis_[node]
            if axis < 0:
                s, e = self._start[node], self._stop[node]
                d = point_distances(self._pts[s:e], q)
                for dist, idx in zip(d.tolist(), self._ids[s:e].tolist()):
                    if len(heap) < k:
                        heapq.heappush(heap, (-dist, -idx))
                    elif (dist, idx) < (-heap[0][0], -heap[0][1]):
                        heapq.heapreplace(heap, (-dist, -idx))
                if len(heap) == k:
                    bound = -heap[0][0]
                continue
            diff = q[axis] - split_[node]
            if diff < 0:
                near, far = left_[node], right_[node]
            else:
                near, far = right_[node], left_[node]
            stack.append((far, abs(diff)))
            stack.append((near, 0.0))
        return sorted(((-i, -d) for d, i in heap), key=lambda t: (t[1], t[0]))

    def nearest(self, q):
        """``(index, distance)`` of the closest point, or ``None`` for an empty index."""
        res = self.k_nearest(q, 1)
        return res[0] if res else None

    def count_within_radius(self, q, r: float) -> int:
        """Number of points at distance ``<= r`` from ``q``."""
        r = float(r)
        if not r >= 0:
            raise InvalidInputError(f"radius must be non-negative, got {r}")
        q = _check_query(q)
        if self.n == 0:
            return 0
        count = 0
        stack = [0]
        while stack:
            node = stack.pop()
            axis = self._axis[node]
            if axis < 0:
                s, e = self._start[node], self._stop[node]
                count += int(np.count_nonzero(point_distances(self._pts[s:e], q) <= r))
                continue
            diff = q[axis] - self._split[node]
            if diff < 0:
                stack.append(self._left[node])
                if -diff <= r:
                    stack.append(self._right[node])
            else:
                stack.append(self._right[node])
                if diff <= r:
                    stack.append(self._left[node])
        return count

    def nearest_many(self, queries):
        """Vectorised convenience: arrays ``(indices, distances)`` for each query row."""
        queries = _as_points(queries)
        if self.n == 0:
            raise InvalidInputError("nearest query against an empty index")
        idx = np.empty(len(queries), dtype=np.int64)
        dist = np.empty(len(queries))
        for i, q in enumerate(queries):
            idx[i], dist[i] = self.nearest(q)
        return idx, dist


def build_index(c) -> SpatialIndex:
    return SpatialIndex(c)


def nearest(ix: SpatialIndex, q):
    return ix.nearest(q)


def k_nearest(ix: SpatialIndex, q, k: int):
    return ix.k_nearest(q, k)


def count_within_radius(ix: SpatialIndex, q, r: float) -> int:
    return ix.count_within_radius(q, r)
