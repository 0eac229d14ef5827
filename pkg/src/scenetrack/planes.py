"""Static-structure detection via iterative RANSAC plane extraction.

Walls, floor, and ceiling are found as large planes that are either roughly
horizontal or roughly vertical. Extraction repeats on the points left over
after each accepted plane until no candidate clears the inlier fraction.
Planes with an off-axis orientation are pulled out of the working set but
their points are never marked static, so a slanted surface cannot shadow a
later extraction and cannot leak into the static mask either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud

# orientation gates: |n_z| >= cos(10 deg) reads horizontal, <= cos(80 deg) vertical
_COS_HORIZONTAL = math.cos(math.radians(10.0))
_COS_VERTICAL = math.cos(math.radians(80.0))
# a point supports a plane only if its own normal roughly agrees; without
# this a slightly tilted hypothesis can harvest thin slices of unrelated
# surfaces it crosses
_COS_AGREE = math.cos(math.radians(30.0))
# structural planes delimit the scene, so at most a sliver of the cloud may
# sit past them; an elevated horizontal patch (table top, coplanar object
# tops) has bulk on both sides and is furniture
_BOUND_BAND = 0.05
_BOUND_FRAC = 0.02
_VOTE_CHUNK = 128


@dataclass(frozen=True)
class PlaneModel:
    """Plane n.p = offset with unit normal, plus the supporting point ids."""

    normal: np.ndarray
    offset: float
    inlier_ids: np.ndarray = field(repr=False)

    @property
    def is_horizontal(self) -> bool:
        return abs(float(self.normal[2])) >= _COS_HORIZONTAL

    @property
    def is_vertical(self) -> bool:
        return abs(float(self.normal[2])) <= _COS_VERTICAL

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal - self.offset)


def _fit_plane(points: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Least-squares plane through a point set; None when degenerate."""
    centroid = points.mean(axis=0)
    centered = points - centroid
    cov = centered.T @ centered / len(points)
    evals, evecs = np.linalg.eigh(cov)
    if evals[1] < 1e-12:  # rank < 2: no stable normal direction
        return None
    normal = evecs[:, 0]
    return normal, float(normal @ centroid)


def _inlier_votes(points: np.ndarray, point_normals: np.ndarray | None,
                  normals: np.ndarray, offsets: np.ndarray,
                  thresh: float) -> np.ndarray:
    """Inlier matrix (points x hypotheses): distance plus normal agreement."""
    votes = np.abs(points @ normals.T - offsets) <= thresh
    if point_normals is not None:
        votes &= np.abs(point_normals @ normals.T) >= _COS_AGREE
    return votes


def _best_hypothesis(points: np.ndarray, point_normals: np.ndarray | None,
                     rng: np.random.Generator, iters: int,
                     thresh: float) -> tuple[np.ndarray, float, int]:
    """Highest-voted plane from random point triples."""
    n = len(points)
    picks = rng.integers(0, n, size=(iters, 3))
    a = points[picks[:, 0]]
    normals = np.cross(points[picks[:, 1]] - a, points[picks[:, 2]] - a)
    norms = np.linalg.norm(normals, axis=1)
    ok = norms > 1e-12
    normals[ok] /= norms[ok, None]
    normals[~ok] = 0.0
    offsets = np.einsum("ij,ij->i", normals, a)
    offsets[~ok] = 1e30  # degenerate triples never win the vote
    best_count = -1
    best_at = 0
    for lo in range(0, iters, _VOTE_CHUNK):
        hi = min(lo + _VOTE_CHUNK, iters)
        counts = _inlier_votes(points, point_normals, normals[lo:hi],
                               offsets[lo:hi], thresh).sum(axis=0)
        at = int(np.argmax(counts))
        if counts[at] > best_count:
            best_count = int(counts[at])
            best_at = lo + at
    return normals[best_at], float(offsets[best_at]), best_count


def detect_static(cloud: PointCloud, inlier_thresh: float = 0.015,
                  min_inlier_frac: float = 0.12, ransac_iters: int = 2048,
                  seed: int = 0, max_planes: int = 12,
                  ) -> tuple[np.ndarray, list[PlaneModel]]:
    """Mark structural points; returns (static mask, accepted planes).

    Planes come out largest first and their inlier ids index the input
    cloud. Extraction stops once no plane reaches min_inlier_frac of the
    points still unclaimed.
    """
    if not 0.0 < min_inlier_frac < 1.0:
        raise ValueError("min_inlier_frac must be in (0, 1)")
    mask = np.zeros(len(cloud), dtype=bool)
    if len(cloud) < 3:
        return mask, []
    rng = np.random.default_rng(seed)
    points = cloud.points
    cloud_normals = cloud.normals
    remaining = np.arange(len(points))
    planes: list[PlaneModel] = []
    for _ in range(max_planes):
        if len(remaining) < 3:
            break
        sub = points[remaining]
        sub_normals = None if cloud_normals is None else cloud_normals[remaining]
        normal, offset, count = _best_hypothesis(sub, sub_normals, rng,
                                                 ransac_iters, inlier_thresh)
        if count < min_inlier_frac * len(remaining):
            break
        inliers = _inlier_votes(sub, sub_normals, normal[None, :],
                                np.array([offset]), inlier_thresh)[:, 0]
        fit = _fit_plane(sub[inliers])
        if fit is not None:
            normal, offset = fit
            refined = _inlier_votes(sub, sub_normals, normal[None, :],
                                    np.array([offset]), inlier_thresh)[:, 0]
            if refined.any():
                inliers = refined
        plane = PlaneModel(normal=normal, offset=offset,
                           inlier_ids=remaining[inliers])
        if (plane.is_horizontal or plane.is_vertical) \
                and _bounds_scene(points, normal, offset):
            planes.append(plane)
            mask[plane.inlier_ids] = True
        remaining = remaining[~inliers]
    return mask, planes


def _bounds_scene(points: np.ndarray, normal: np.ndarray,
                  offset: float) -> bool:
    """True if nearly all points lie on one side of the plane."""
    signed = points @ normal - offset
    limit = _BOUND_FRAC * len(points)
    return (np.count_nonzero(signed < -_BOUND_BAND) <= limit
            or np.count_nonzero(signed > _BOUND_BAND) <= limit)


def mask_near_planes(cloud: PointCloud, planes: list[PlaneModel],
                     thresh: float) -> np.ndarray:
    """Static mask for a different sampling of the same scene.

    With normals present, a point only joins a plane it agrees with, so
    e.g. the bottom fringe of an object resting on the floor (horizontal
    point normals, vertical plane normal) stays dynamic.
    """
    mask = np.zeros(len(cloud), dtype=bool)
    for plane in planes:
        near = plane.distances(cloud.points) <= thresh
        if cloud.normals is not None:
            near &= np.abs(cloud.normals @ plane.normal) >= _COS_AGREE
        mask |= near
    return mask


def floor_height(planes: list[PlaneModel],
                 at_xy: tuple[float, float] = (0.0, 0.0)) -> float:
    """Height of the lowest horizontal plane, evaluated at a ground location.

    Evaluating away from the supported region would amplify residual fit
    tilt, so callers should pass the scene center.
    """
    heights = [(plane.offset - plane.normal[0] * at_xy[0]
                - plane.normal[1] * at_xy[1]) / float(plane.normal[2])
               for plane in planes if plane.is_horizontal]
    if not heights:
        raise ValueError("no horizontal plane found")
    return min(heights)
