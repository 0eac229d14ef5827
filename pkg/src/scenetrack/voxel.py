"""Occupancy voxelization used by the arrangement coverage term."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VoxelGrid:
    """Axis-aligned grid anchored at a scene's bounding-box minimum.

    `occupied` holds the sorted linear ids of cells containing at least one
    of the points the grid was built from.
    """

    origin: np.ndarray
    voxel_size: float
    dims: tuple[int, int, int]
    occupied: np.ndarray

    @property
    def n_occupied(self) -> int:
        return len(self.occupied)

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        """Linear cell id per point; -1 when outside the grid extent."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        idx = np.floor((pts - self.origin) / self.voxel_size).astype(np.int64)
        inside = ((idx >= 0) & (idx < np.asarray(self.dims))).all(axis=1)
        linear = (idx[:, 0] * self.dims[1] + idx[:, 1]) * self.dims[2] + idx[:, 2]
        return np.where(inside, linear, -1)

    def occupied_cells_of(self, points: np.ndarray) -> np.ndarray:
        """Unique linear ids of `occupied` cells touched by these points."""
        ids = self.cell_of(points)
        ids = np.unique(ids[ids >= 0])
        hit = np.searchsorted(self.occupied, ids)
        hit = np.clip(hit, 0, len(self.occupied) - 1) if len(self.occupied) else hit
        if len(self.occupied) == 0:
            return ids[:0]
        return ids[self.occupied[hit] == ids]


def build_grid(points: np.ndarray, voxel_size: float) -> VoxelGrid:
    """Grid covering the points' bounding box, marking their cells occupied."""
    if voxel_size <= 0.0:
        raise ValueError("voxel_size must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return VoxelGrid(origin=np.zeros(3), voxel_size=voxel_size,
                         dims=(0, 0, 0), occupied=np.zeros(0, dtype=np.int64))
    origin = pts.min(axis=0)
    extent = pts.max(axis=0) - origin
    dims = tuple(int(d) for d in np.floor(extent / voxel_size).astype(np.int64) + 1)
    grid = VoxelGrid(origin=origin, voxel_size=voxel_size, dims=dims,
                     occupied=np.zeros(0, dtype=np.int64))
    ids = grid.cell_of(pts)
    return VoxelGrid(origin=origin, voxel_size=voxel_size, dims=dims,
                     occupied=np.unique(ids))
