"""Merging fresh scan evidence into an object's stored geometry.

The observed segment is mapped back into the object-local frame with the
inverse of the solved pose, pooled with the existing surface at a fixed
1 cm bin size, and re-thinned so the stored geometry keeps a bounded,
roughly uniform density no matter how many times the object was seen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, concatenate
from .model import ObjectInstance
from .pose import GroundPose
from .sampling import poisson_disk_subsample

FUSION_BIN = 0.01


@dataclass(frozen=True)
class FusionResult:
    geometry: PointCloud
    observed: bool


def _bin_mean(cloud: PointCloud, size: float) -> PointCloud:
    """Average positions and normals over a regular grid of bins."""
    offset = cloud.points.min(axis=0)
    keys = np.floor((cloud.points - offset) / size).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    n = len(uniq)
    counts = np.bincount(inverse, minlength=n).astype(np.float64)

    positions = np.zeros((n, 3))
    np.add.at(positions, inverse, cloud.points)
    positions /= counts[:, None]

    normals = np.zeros((n, 3))
    np.add.at(normals, inverse, cloud.normals)
    lengths = np.linalg.norm(normals, axis=1)
    # Opposing members can cancel; fall back to the bin's first normal.
    order = np.argsort(inverse, kind="stable")
    firsts = order[np.r_[0, np.flatnonzero(np.diff(inverse[order])) + 1]]
    cancelled = lengths < 1e-12
    normals[cancelled] = cloud.normals[firsts[cancelled]]
    lengths[cancelled] = 1.0
    normals /= lengths[:, None]
    return PointCloud(positions, normals=normals)


def fuse_object(obj: ObjectInstance, segment: PointCloud, pose: GroundPose,
                seed: int = 0) -> FusionResult:
    """Fold an observed segment into obj's geometry; empty means unseen.

    The returned geometry stays in the object-local frame the instance was
    created in, so downstream poses keep their meaning.
    """
    if len(segment) == 0:
        return FusionResult(obj.geometry, observed=False)
    if not segment.has_normals:
        raise ValueError("normals required")
    local = segment.without_labels().transformed(pose.inverse())
    merged = _bin_mean(concatenate([obj.geometry, local]), FUSION_BIN)
    return FusionResult(poisson_disk_subsample(merged, FUSION_BIN, seed=seed),
                        observed=True)
