"""Candidate pose generation: dense ground-plane grid search, coarse to fine.

Every object slides over a (tx, ty, yaw) grid spanning the scan at the
coarsest sampling level; each grid pose is refined by ICP against the scan's
dynamic points and scored by a clamped point-to-plane residual. Survivors
are re-refined and re-scored at each finer level, then non-maximum
suppression thins near-duplicates.

Grid cells with no dynamic scan point anywhere near the object footprint are
skipped outright: such poses cannot produce a correspondence within the ICP
gate nor a nonzero score contribution, so pruning them is exact.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .icp import _CHUNK_POINT_ROWS, _transformed, icp_ground_batch
from .model import ObjectInstance
from .planes import PlaneModel, floor_height
from .pose import GroundPose, wrap_angle
from .sampling import HIERARCHY_SPACINGS, build_hierarchy
from .spatial import SpatialIndex

log = logging.getLogger(__name__)

_PRUNE_MARGIN = 0.2
_DEDUPE_XY = 0.002
_DEDUPE_YAW = math.radians(0.5)


@dataclass(frozen=True)
class ScoredPose:
    """One candidate placement with its geometric match score."""

    pose: GroundPose
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")


@dataclass(frozen=True)
class ProposalConfig:
    translation_step: float = 0.10
    yaw_count: int = 16
    promote_fraction: float = 0.5
    max_poses_per_level: int = 50
    nms_dist: float = 0.2
    nms_yaw: float = math.radians(15.0)
    score_tau: float | None = None  # None: use the level spacing
    icp_iters: int = 20
    bottom_percentile: float = 1.0

    def __post_init__(self) -> None:
        if min(self.translation_step, self.nms_dist, self.nms_yaw) <= 0.0:
            raise ValueError("grid and NMS parameters must be positive")
        if self.yaw_count < 1 or self.max_poses_per_level < 1:
            raise ValueError("yaw_count and max_poses_per_level must be >= 1")
        if not 0.0 < self.promote_fraction <= 1.0:
            raise ValueError("promote_fraction must be in (0, 1]")
        if self.score_tau is not None and self.score_tau <= 0.0:
            raise ValueError("score_tau must be positive")

    def tau(self, level: int) -> float:
        return self.score_tau if self.score_tau is not None \
            else HIERARCHY_SPACINGS[level]


@dataclass(frozen=True)
class SceneContext:
    """One scan prepared for proposal queries against its dynamic points."""

    cloud: PointCloud
    static_mask: np.ndarray
    floor_z: float
    dynamic_indices: tuple[SpatialIndex, ...]
    bounds_min: np.ndarray
    bounds_max: np.ndarray


def prepare_scene(scan: PointCloud, static_mask: np.ndarray,
                  planes: list[PlaneModel], seed: int = 0) -> SceneContext:
    """Index the scan's dynamic points at every hierarchy level."""
    if not scan.has_normals:
        raise ValueError("scene normals required")
    static_mask = np.asarray(static_mask, dtype=bool)
    center = scan.points[:, :2].mean(axis=0)
    try:
        floor_z = floor_height(planes, at_xy=(center[0], center[1]))
    except ValueError as exc:
        raise ValueError("no ground plane") from exc
    dynamic = scan.select(np.flatnonzero(~static_mask))
    if len(dynamic) == 0:
        indices: tuple[SpatialIndex, ...] = tuple(
            SpatialIndex(dynamic) for _ in HIERARCHY_SPACINGS)
    else:
        hierarchy = build_hierarchy(dynamic, seed=seed)
        indices = tuple(SpatialIndex(level) for level in hierarchy.levels)
    lo, hi = scan.bounds()
    return SceneContext(cloud=scan, static_mask=static_mask, floor_z=floor_z,
                        dynamic_indices=indices, bounds_min=lo, bounds_max=hi)


def _score_batch(src: np.ndarray, index: SpatialIndex, params: np.ndarray,
                 tau: float) -> np.ndarray:
    """Clamped point-to-plane score of every pose row; vectorized."""
    if index.tree is None:
        return np.zeros(len(params))
    scores = np.empty(len(params))
    chunk = max(1, _CHUNK_POINT_ROWS // len(src))
    for lo in range(0, len(params), chunk):
        moved = _transformed(src, params[lo:lo + chunk])
        flat = moved.reshape(-1, 3)
        _, idx = index.tree.query(flat, k=1, distance_upper_bound=2.0 * tau,
                                  workers=-1)
        valid = idx < len(index.points)
        idx = np.where(valid, idx, 0)
        residual = np.abs(np.einsum("ik,ik->i", flat - index.points[idx],
                                    index.normals[idx]))
        contrib = np.clip(1.0 - residual / tau, 0.0, None) * valid
        scores[lo:lo + chunk] = contrib.reshape(moved.shape[:2]).mean(axis=1)
    return scores


def score_pose(obj: ObjectInstance, level: int, scene_index: SpatialIndex,
               pose: GroundPose, tau: float) -> float:
    """Mean per-point match of the object's level points under one pose.

    A point contributes max(0, 1 - |point-to-plane residual| / tau), and
    contributes nothing when its nearest scene point is beyond 2 tau.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    pts = obj.hierarchy.level(level).points
    if len(pts) == 0:
        raise ValueError("empty level")
    if scene_index.tree is not None and scene_index.normals is None:
        raise ValueError("scene normals required")
    row = np.array([[pose.tx, pose.ty, pose.tz, pose.yaw]])
    return float(_score_batch(pts, scene_index, row, tau)[0])


def _object_footprint(obj: ObjectInstance) -> float:
    return float(np.linalg.norm(obj.geometry.points[:, :2], axis=1).max())


def _grid_params(scene: SceneContext, obj: ObjectInstance,
                 cfg: ProposalConfig) -> np.ndarray:
    """(P, 4) init rows over the pruned (tx, ty) x yaw grid."""
    lo, hi = scene.bounds_min, scene.bounds_max
    xs = np.arange(lo[0], hi[0] + cfg.translation_step, cfg.translation_step)
    ys = np.arange(lo[1], hi[1] + cfg.translation_step, cfg.translation_step)
    cells = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)

    coarse = scene.dynamic_indices[-1]
    if coarse.tree is None:
        return np.zeros((0, 4))
    footprint = _object_footprint(obj)
    ground = cKDTree(coarse.points[:, :2])
    near, _ = ground.query(cells, k=1,
                           distance_upper_bound=footprint + _PRUNE_MARGIN,
                           workers=-1)
    cells = cells[np.isfinite(near)]

    bottom = np.percentile(obj.geometry.points[:, 2], cfg.bottom_percentile)
    tz = scene.floor_z - bottom
    yaws = np.arange(cfg.yaw_count) * (2.0 * math.pi / cfg.yaw_count)
    params = np.empty((len(cells) * cfg.yaw_count, 4))
    params[:, 0] = np.repeat(cells[:, 0], cfg.yaw_count)
    params[:, 1] = np.repeat(cells[:, 1], cfg.yaw_count)
    params[:, 2] = tz
    params[:, 3] = np.tile(yaws, len(cells))
    return params


def _promote(params: np.ndarray, scores: np.ndarray,
             cfg: ProposalConfig) -> tuple[np.ndarray, np.ndarray]:
    """Dedupe, keep near-best poses, cap the survivor count."""
    best = scores.max() if len(scores) else 0.0
    if best <= 0.0:
        return params[:0], scores[:0]
    keep = scores >= cfg.promote_fraction * best
    params, scores = params[keep], scores[keep]
    order = np.lexsort((params[:, 3], params[:, 1], params[:, 0], -scores))
    params, scores = params[order], scores[order]
    buckets = set()
    chosen = []
    for i in range(len(params)):
        key = (round(params[i, 0] / _DEDUPE_XY),
               round(params[i, 1] / _DEDUPE_XY),
               round(wrap_angle(params[i, 3]) / _DEDUPE_YAW))
        if key in buckets:
            continue
        buckets.add(key)
        chosen.append(i)
        if len(chosen) >= cfg.max_poses_per_level:
            break
    return params[chosen], scores[chosen]


def _yaw_gap(a: np.ndarray, b: float) -> np.ndarray:
    return np.abs((a - b + math.pi) % (2.0 * math.pi) - math.pi)


def _nms(params: np.ndarray, scores: np.ndarray,
         cfg: ProposalConfig) -> list[int]:
    """Greedy suppression of poses close in both translation and yaw."""
    order = np.lexsort((params[:, 3], params[:, 1], params[:, 0], -scores))
    kept: list[int] = []
    for i in order:
        close = False
        for j in kept:
            if (np.hypot(params[i, 0] - params[j, 0],
                         params[i, 1] - params[j, 1]) < cfg.nms_dist
                    and _yaw_gap(params[i, 3:4], params[j, 3])[0] < cfg.nms_yaw):
                close = True
                break
        if not close:
            kept.append(int(i))
    return kept


def propose_poses(obj: ObjectInstance, scene: SceneContext,
                  cfg: ProposalConfig | None = None) -> list[ScoredPose]:
    """Scored ground-plane placements for one object, best first."""
    if cfg is None:
        cfg = ProposalConfig()
    extent = scene.bounds_max[:2] - scene.bounds_min[:2]
    if 2.0 * _object_footprint(obj) > max(extent[0], extent[1]):
        log.warning("object %d exceeds scene bounds; no proposals", obj.uid)
        return []

    params = _grid_params(scene, obj, cfg)
    coarsest = len(HIERARCHY_SPACINGS) - 1
    for level in range(coarsest, -1, -1):
        if len(params) == 0:
            return []
        spacing = HIERARCHY_SPACINGS[level]
        src = obj.hierarchy.level(level).points
        index = scene.dynamic_indices[level]
        if index.tree is None:
            return []
        refined = icp_ground_batch(src, index, params,
                                   max_iters=cfg.icp_iters,
                                   corr_dist=2.0 * spacing)
        params = refined.params
        scores = _score_batch(src, index, params, cfg.tau(level))
        params, scores = _promote(params, scores, cfg)

    kept = _nms(params, scores, cfg)
    return [ScoredPose(pose=GroundPose(*params[i]), score=float(scores[i]))
            for i in kept]
