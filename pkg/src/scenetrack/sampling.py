"""Blue-noise subsampling and the four-level sampling hierarchy.

Subsampling is deterministic dart throwing over a uniform hash grid: points
are visited in a seeded random order and kept unless a kept point already
lies within the radius. Output points are a subset of the input, pairwise
spacing is >= radius, and every input point ends up within radius of some
kept point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud

HIERARCHY_SPACINGS = (0.01, 0.02, 0.04, 0.08)

try:  # optional speedup; the pure-python path selects identical points
    from numba import njit as _njit
except ImportError:  # pragma: no cover - exercised only without numba
    _njit = None


def _dart_core(pts, order, cell_x, cell_y, cell_z, nx, ny, nz,
               cells_sorted, sorted_idx, r2):
    n = order.shape[0]
    keep = np.zeros(n, np.bool_)
    m = cells_sorted.shape[0]
    for oi in range(n):
        i = order[oi]
        ok = True
        for dx in range(-1, 2):
            cx = cell_x[i] + dx
            if cx < 0 or cx >= nx:
                continue
            for dy in range(-1, 2):
                cy = cell_y[i] + dy
                if cy < 0 or cy >= ny:
                    continue
                for dz in range(-1, 2):
                    cz = cell_z[i] + dz
                    if cz < 0 or cz >= nz:
                        continue
                    cid = (cx * ny + cy) * nz + cz
                    j = np.searchsorted(cells_sorted, cid)
                    while j < m and cells_sorted[j] == cid:
                        p = sorted_idx[j]
                        if keep[p]:
                            ddx = pts[i, 0] - pts[p, 0]
                            ddy = pts[i, 1] - pts[p, 1]
                            ddz = pts[i, 2] - pts[p, 2]
                            if ddx * ddx + ddy * ddy + ddz * ddz < r2:
                                ok = False
                                break
                        j += 1
                    if not ok:
                        break
                if not ok:
                    break
            if not ok:
                break
        keep[i] = ok
    return keep


_dart_core_jit = _njit(cache=True)(_dart_core) if _njit is not None else None


def poisson_disk_indices(points: np.ndarray, radius: float, seed: int = 0) -> np.ndarray:
    """Indices (ascending) of a maximal subset with pairwise spacing >= radius."""
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n = len(pts)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    mins = pts.min(axis=0)
    cell = np.floor((pts - mins) / radius).astype(np.int64)
    nx = int(cell[:, 0].max()) + 1
    ny = int(cell[:, 1].max()) + 1
    nz = int(cell[:, 2].max()) + 1
    cell_id = (cell[:, 0] * ny + cell[:, 1]) * nz + cell[:, 2]
    sorted_idx = np.argsort(cell_id, kind="stable")
    cells_sorted = cell_id[sorted_idx]
    order = np.random.default_rng(seed).permutation(n)
    core = _dart_core_jit if _dart_core_jit is not None else _dart_core
    keep = core(pts, order, cell[:, 0], cell[:, 1], cell[:, 2],
                nx, ny, nz, cells_sorted, sorted_idx, radius * radius)
    return np.flatnonzero(keep)


def poisson_disk_subsample(cloud: PointCloud, radius: float, seed: int = 0) -> PointCloud:
    """Blue-noise subset of the cloud; normals and labels ride along."""
    if len(cloud) == 0:
        if radius <= 0.0:
            raise ValueError("radius must be positive")
        return cloud
    return cloud.select(poisson_disk_indices(cloud.points, radius, seed))


@dataclass(frozen=True)
class SamplingHierarchy:
    """Fixed four-level resampling of one cloud, finest to coarsest."""

    levels: tuple[PointCloud, ...]
    spacings: tuple[float, ...] = HIERARCHY_SPACINGS

    def __post_init__(self) -> None:
        if len(self.levels) != len(self.spacings):
            raise ValueError("one level per spacing")

    def level(self, i: int) -> PointCloud:
        return self.levels[i]

    @property
    def finest(self) -> PointCloud:
        return self.levels[0]

    @property
    def coarsest(self) -> PointCloud:
        return self.levels[-1]


def build_hierarchy(cloud: PointCloud, seed: int = 0) -> SamplingHierarchy:
    """Resample the cloud at the four standard spacings."""
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    if not cloud.has_normals:
        raise ValueError("normals required")
    levels = tuple(poisson_disk_subsample(cloud, s, seed=seed + li)
                   for li, s in enumerate(HIERARCHY_SPACINGS))
    return SamplingHierarchy(levels)
