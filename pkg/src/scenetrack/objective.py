"""The arrangement objective: coverage, geometry, intersection, hysteresis.

An arrangement is scored against a voxelized scan by a weighted sum of four
bounded terms: how much dynamic scan volume the placed objects explain, how
well each placement matches locally, how little the placements interpenetrate,
and how close the placements stay to where their objects were last seen.

Empty arrangements score coverage/geometry/hysteresis 0 and intersection 1,
which keeps the empty solution from ever being an optimum in a scene with
dynamic content.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import Arrangement, ObjectStats, PosedObject, TemporalModel
from .cloud import PointCloud
from .pose import GroundPose
from .voxel import VoxelGrid, build_grid

log = logging.getLogger(__name__)

# spacing of the hierarchy level used to rasterize placed objects; level 1
# (0.02 m) stays well under the 0.05 m voxel so surfaces cannot skip cells
RASTER_LEVEL = 1


@dataclass(frozen=True)
class ObjectiveWeights:
    """Term weights and scale constants; defaults follow the method."""

    w_c: float = 2.0
    w_g: float = 0.3
    w_i: float = 1.0
    w_h: float = 1.8
    h: float = 0.4
    sigma_r: float = 0.25
    sigma_h: float = 0.5
    voxel_size: float = 0.05
    # literal form uses exp(-dist / 2 sigma^2); squared uses exp(-dist^2 / ...)
    hysteresis_squared: bool = False

    def __post_init__(self) -> None:
        if min(self.w_c, self.w_g, self.w_i, self.w_h) < 0.0:
            raise ValueError("weights must be non-negative")
        if not 0.0 < self.h < 1.0:
            raise ValueError("h must be in (0, 1)")
        if min(self.sigma_r, self.sigma_h, self.voxel_size) <= 0.0:
            raise ValueError("sigmas and voxel_size must be positive")


@dataclass(frozen=True)
class ObjectiveValue:
    """Weighted total plus the four unweighted term values."""

    total: float
    coverage: float
    geometry: float
    intersection: float
    hysteresis: float


def combine_terms(weights: ObjectiveWeights, coverage: float, geometry: float,
                  intersection: float, hysteresis: float) -> float:
    return (weights.w_c * coverage + weights.w_g * geometry
            + weights.w_i * intersection + weights.w_h * hysteresis)


def voxelize_scene(scene: PointCloud, static_mask: np.ndarray,
                   voxel_size: float) -> VoxelGrid:
    """Occupancy of the scan's dynamic points on a scene-anchored lattice.

    The grid spans the full scan bounding box (origin at its min corner)
    but only cells holding at least one non-static point count as occupied.
    """
    if len(scene) == 0:
        return build_grid(np.zeros((0, 3)), voxel_size)
    static_mask = np.asarray(static_mask, dtype=bool)
    if static_mask.shape != (len(scene),):
        raise ValueError("static_mask must align with scene points")
    frame = build_grid(scene.points, voxel_size)
    ids = frame.cell_of(scene.points[~static_mask])
    return VoxelGrid(origin=frame.origin, voxel_size=voxel_size,
                     dims=frame.dims, occupied=np.unique(ids[ids >= 0]))


def _placement_cells(grid: VoxelGrid, arrangement: Arrangement,
                     model: TemporalModel) -> list[np.ndarray]:
    cells = []
    for placed in arrangement.placements:
        obj = model.resolve(placed.uid)
        pts = placed.pose.apply(obj.hierarchy.level(RASTER_LEVEL).points)
        cells.append(grid.occupied_cells_of(pts))
    return cells


def coverage_term(grid: VoxelGrid, arrangement: Arrangement,
                  model: TemporalModel) -> float:
    """Fraction of dynamic scan voxels touched by the posed objects."""
    if grid.n_occupied == 0:
        log.warning("no dynamic content: coverage forced to 0")
        return 0.0
    cells = _placement_cells(grid, arrangement, model)
    if not cells:
        return 0.0
    return len(np.unique(np.concatenate(cells))) / grid.n_occupied


def geometry_term(arrangement: Arrangement) -> float:
    """Mean placement score; 0 for the empty arrangement."""
    if not arrangement.placements:
        return 0.0
    return float(np.mean([p.score for p in arrangement.placements]))


@dataclass(frozen=True)
class PosedStats:
    """Object centroid and covariance carried into the scene frame."""

    centroid: np.ndarray
    covariance: np.ndarray

    @classmethod
    def from_object(cls, stats: ObjectStats, pose: GroundPose,
                    epsilon: float = 1e-6) -> "PosedStats":
        rot = pose.matrix()[:3, :3]
        cov = rot @ stats.covariance @ rot.T + epsilon * np.eye(3)
        return cls(centroid=pose.apply(stats.centroid), covariance=cov)


def _mahalanobis(point: np.ndarray, stats: PosedStats) -> float:
    diff = point - stats.centroid
    try:
        solved = np.linalg.solve(stats.covariance, diff)
    except np.linalg.LinAlgError as exc:
        raise ValueError("degenerate object") from exc
    return float(np.sqrt(diff @ solved))


def symmetric_mahalanobis(a: PosedStats, b: PosedStats) -> float:
    """Average Mahalanobis distance of the centroid midpoint to both objects."""
    midpoint = 0.5 * (a.centroid + b.centroid)
    return 0.5 * (_mahalanobis(midpoint, a) + _mahalanobis(midpoint, b))


def intersection_term(arrangement: Arrangement, model: TemporalModel,
                      sigma_r: float) -> float:
    """1 minus the strongest pairwise overlap penalty; 1 when < 2 placed."""
    posed = [PosedStats.from_object(model.resolve(p.uid).stats, p.pose)
             for p in arrangement.placements]
    worst = 0.0
    for i in range(len(posed)):
        for j in range(i + 1, len(posed)):
            dist = symmetric_mahalanobis(posed[i], posed[j])
            worst = max(worst, float(np.exp(-dist * dist / (2.0 * sigma_r * sigma_r))))
    return 1.0 - worst


def hysteresis_score(placement: PosedObject, model: TemporalModel, h: float,
                     sigma_h: float, squared: bool = False) -> float:
    """Closeness of a placement to the object's most recent known pose."""
    last = model.last_placement(placement.uid)
    if last is None:
        return h
    centroid = model.resolve(placement.uid).stats.centroid
    dist = float(np.linalg.norm(placement.pose.apply(centroid)
                                - last[1].pose.apply(centroid)))
    exponent = dist * dist if squared else dist
    return h + (1.0 - h) * float(np.exp(-exponent / (2.0 * sigma_h * sigma_h)))


def hysteresis_term(arrangement: Arrangement, model: TemporalModel, h: float,
                    sigma_h: float, squared: bool = False) -> float:
    """Mean hysteresis score; 0 for the empty arrangement."""
    if not arrangement.placements:
        return 0.0
    return float(np.mean([hysteresis_score(p, model, h, sigma_h, squared)
                          for p in arrangement.placements]))


def objective(grid: VoxelGrid, arrangement: Arrangement, model: TemporalModel,
              weights: ObjectiveWeights) -> ObjectiveValue:
    """Evaluate all four terms and their weighted combination."""
    coverage = coverage_term(grid, arrangement, model)
    geometry = geometry_term(arrangement)
    intersection = intersection_term(arrangement, model, weights.sigma_r)
    hysteresis = hysteresis_term(arrangement, model, weights.h,
                                 weights.sigma_h, weights.hysteresis_squared)
    return ObjectiveValue(
        total=combine_terms(weights, coverage, geometry, intersection, hysteresis),
        coverage=coverage, geometry=geometry,
        intersection=intersection, hysteresis=hysteresis)


class ObjectiveContext:
    """Caches for evaluating many arrangements against one scan.

    Placement-level quantities (rasterized cells, posed stats, hysteresis
    scores, pairwise penalties) depend only on (object id, pose), so the
    annealing loop can reuse them across thousands of candidate states.
    Cells are stored as dense indices into the grid's occupied-cell list.
    """

    def __init__(self, grid: VoxelGrid, model: TemporalModel,
                 weights: ObjectiveWeights) -> None:
        self.grid = grid
        self.model = model
        self.weights = weights
        if grid.n_occupied == 0:
            log.warning("no dynamic content: coverage forced to 0")
        self._cells: dict[tuple, np.ndarray] = {}
        self._posed: dict[tuple, PosedStats] = {}
        self._hyst: dict[tuple, float] = {}
        self._pair: dict[tuple, float] = {}

    @staticmethod
    def _key(placed: PosedObject) -> tuple:
        pose = placed.pose
        return (placed.uid, pose.tx, pose.ty, pose.tz, pose.yaw)

    def cells(self, placed: PosedObject) -> np.ndarray:
        """Dense occupied-cell indices covered by this placement."""
        key = self._key(placed)
        got = self._cells.get(key)
        if got is None:
            obj = self.model.resolve(placed.uid)
            pts = placed.pose.apply(obj.hierarchy.level(RASTER_LEVEL).points)
            ids = self.grid.occupied_cells_of(pts)
            got = np.searchsorted(self.grid.occupied, ids)
            self._cells[key] = got
        return got

    def posed_stats(self, placed: PosedObject) -> PosedStats:
        key = self._key(placed)
        got = self._posed.get(key)
        if got is None:
            got = PosedStats.from_object(self.model.resolve(placed.uid).stats,
                                         placed.pose)
            self._posed[key] = got
        return got

    def hysteresis(self, placed: PosedObject) -> float:
        key = self._key(placed)
        got = self._hyst.get(key)
        if got is None:
            got = hysteresis_score(placed, self.model, self.weights.h,
                                   self.weights.sigma_h,
                                   self.weights.hysteresis_squared)
            self._hyst[key] = got
        return got

    def pair_penalty(self, a: PosedObject, b: PosedObject) -> float:
        key_a, key_b = self._key(a), self._key(b)
        key = (key_a, key_b) if key_a <= key_b else (key_b, key_a)
        got = self._pair.get(key)
        if got is None:
            dist = symmetric_mahalanobis(self.posed_stats(a), self.posed_stats(b))
            sigma = self.weights.sigma_r
            got = float(np.exp(-dist * dist / (2.0 * sigma * sigma)))
            self._pair[key] = got
        return got

    def evaluate(self, placements: list[PosedObject]) -> ObjectiveValue:
        """Objective of an arrangement assembled from cached pieces."""
        if placements:
            if self.grid.n_occupied == 0:
                coverage = 0.0
            else:
                touched = np.zeros(self.grid.n_occupied, dtype=bool)
                for placed in placements:
                    touched[self.cells(placed)] = True
                coverage = touched.sum() / self.grid.n_occupied
            geometry = float(np.mean([p.score for p in placements]))
            hysteresis = float(np.mean([self.hysteresis(p) for p in placements]))
        else:
            coverage = geometry = hysteresis = 0.0
        worst = 0.0
        for i in range(len(placements)):
            for j in range(i + 1, len(placements)):
                worst = max(worst, self.pair_penalty(placements[i], placements[j]))
        intersection = 1.0 - worst
        return ObjectiveValue(
            total=combine_terms(self.weights, coverage, geometry,
                                intersection, hysteresis),
            coverage=coverage, geometry=geometry,
            intersection=intersection, hysteresis=hysteresis)
