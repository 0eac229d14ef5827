"""Point cloud container and normal estimation.

Clouds are immutable value objects: the backing arrays are marked read-only
and every operation derives a new cloud. Coordinates are metric, gravity is
+z by convention.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.spatial import cKDTree

if TYPE_CHECKING:
    from .pose import GroundPose

log = logging.getLogger(__name__)

GRAVITY = np.array([0.0, 0.0, 1.0])
_UNIT_TOL = 1e-6
_DEGENERATE_EIGVAL = 1e-18


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PointCloud:
    """Points with optional unit normals and per-point integer labels.

    semantic_labels use class id 0 for static structure / background;
    instance_labels use id 0 for "unassigned".
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    semantic_labels: np.ndarray | None = None
    instance_labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("points contain NaN or Inf")
        object.__setattr__(self, "points", _readonly(pts))
        n = len(pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise ValueError("normals shape must match points")
            if n:
                lengths = np.linalg.norm(nrm, axis=1)
                if np.abs(lengths - 1.0).max() > _UNIT_TOL:
                    raise ValueError("normals must have unit length")
            object.__setattr__(self, "normals", _readonly(nrm))
        for name in ("semantic_labels", "instance_labels"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=np.int32)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per point")
            object.__setattr__(self, name, _readonly(arr))

    # ------------------------------------------------------------------
    # basic introspection

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    @property
    def has_labels(self) -> bool:
        return self.semantic_labels is not None and self.instance_labels is not None

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned (min, max) corners. Errors on an empty cloud."""
        if not len(self):
            raise ValueError("empty cloud has no bounds")
        return self.points.min(axis=0), self.points.max(axis=0)

    def centroid(self) -> np.ndarray:
        if not len(self):
            raise ValueError("empty cloud has no centroid")
        return self.points.mean(axis=0)

    # ------------------------------------------------------------------
    # derivations

    def select(self, index: np.ndarray) -> "PointCloud":
        """Row subset (boolean mask or integer indices), labels carried along."""
        return PointCloud(
            self.points[index],
            self.normals[index] if self.normals is not None else None,
            self.semantic_labels[index] if self.semantic_labels is not None else None,
            self.instance_labels[index] if self.instance_labels is not None else None,
        )

    def transformed(self, pose: "GroundPose") -> "PointCloud":
        return PointCloud(
            pose.apply(self.points),
            pose.rotate(self.normals) if self.normals is not None else None,
            self.semantic_labels,
            self.instance_labels,
        )

    def translated(self, offset: np.ndarray) -> "PointCloud":
        return PointCloud(
            self.points + np.asarray(offset, dtype=np.float64),
            self.normals,
            self.semantic_labels,
            self.instance_labels,
        )

    def with_labels(self, semantic: np.ndarray, instance: np.ndarray) -> "PointCloud":
        return PointCloud(self.points, self.normals, semantic, instance)

    def without_labels(self) -> "PointCloud":
        return PointCloud(self.points, self.normals)

    def with_normals(self, normals: np.ndarray) -> "PointCloud":
        return PointCloud(self.points, normals, self.semantic_labels, self.instance_labels)

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 3)))


def concatenate(clouds: Sequence[PointCloud]) -> PointCloud:
    """Stack clouds; optional fields survive only when present on every input."""
    if not clouds:
        return PointCloud.empty()
    pts = np.vstack([c.points for c in clouds])
    normals = None
    if all(c.normals is not None for c in clouds):
        normals = np.vstack([c.normals for c in clouds])
    sem = inst = None
    if all(c.semantic_labels is not None for c in clouds):
        sem = np.concatenate([c.semantic_labels for c in clouds])
    if all(c.instance_labels is not None for c in clouds):
        inst = np.concatenate([c.instance_labels for c in clouds])
    return PointCloud(pts, normals, sem, inst)


def estimate_normals(cloud: PointCloud, k: int = 16) -> PointCloud:
    """Per-point normals from the covariance of the k nearest neighbors.

    The normal is the smallest-eigenvalue eigenvector of the neighborhood
    covariance (neighborhood includes the point itself). Signs follow a
    deterministic rule: flip so that n.z >= 0, ties broken by n.x >= 0,
    then n.y >= 0. Degenerate neighborhoods (all points coincident) fall
    back to the gravity axis and are logged.
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    if len(cloud) < k + 1:
        raise ValueError("insufficient points")
    pts = cloud.points
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k + 1, workers=-1)
    nbrs = pts[idx]  # (N, k+1, 3)
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nij,nik->njk", centered, centered) / (k + 1)
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0].copy()

    degenerate = evals[:, 2] < _DEGENERATE_EIGVAL
    if degenerate.any():
        log.warning("estimate_normals: %d degenerate neighborhoods, using gravity axis",
                    int(degenerate.sum()))
        normals[degenerate] = GRAVITY

    lengths = np.linalg.norm(normals, axis=1)
    normals /= np.maximum(lengths, 1e-300)[:, None]

    nx, ny, nz = normals[:, 0], normals[:, 1], normals[:, 2]
    sign = np.where(nz != 0.0, np.sign(nz),
                    np.where(nx != 0.0, np.sign(nx),
                             np.where(ny != 0.0, np.sign(ny), 1.0)))
    normals *= sign[:, None]
    return cloud.with_normals(normals)
