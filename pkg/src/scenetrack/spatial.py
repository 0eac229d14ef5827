"""Exact nearest-neighbor index over an immutable point cloud."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud


class SpatialIndex:
    """Thin kd-tree wrapper that keeps a handle on its source cloud.

    Queries are exact (same results as brute-force nearest neighbor).
    The index is built once; the cloud stays immutable.
    """

    def __init__(self, cloud: PointCloud):
        self.cloud = cloud
        self._tree = cKDTree(cloud.points) if len(cloud) else None

    def __len__(self) -> int:
        return len(self.cloud)

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points

    @property
    def normals(self) -> np.ndarray | None:
        return self.cloud.normals

    @property
    def tree(self) -> cKDTree | None:
        return self._tree

    def nearest(self, queries: np.ndarray, max_dist: float = np.inf
                ) -> tuple[np.ndarray, np.ndarray]:
        """Nearest neighbor per query point.

        Returns (distances, indices); misses (empty index, or nothing within
        max_dist) come back as (inf, -1).
        """
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if self._tree is None:
            return np.full(len(q), np.inf), np.full(len(q), -1, dtype=np.int64)
        dist, idx = self._tree.query(q, k=1, distance_upper_bound=max_dist, workers=-1)
        idx = idx.astype(np.int64)
        miss = idx == len(self.cloud)
        idx[miss] = -1
        return dist, idx

    def knn(self, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """k nearest neighbors per query; k is clamped to the cloud size."""
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if self._tree is None:
            raise ValueError("index is empty")
        k = min(k, len(self.cloud))
        dist, idx = self._tree.query(q, k=k, workers=-1)
        if k == 1:
            dist, idx = dist[:, None], idx[:, None]
        return dist, idx.astype(np.int64)
