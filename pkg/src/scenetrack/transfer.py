"""Label transfer from a posed arrangement onto a scan, plus MRF cleanup.

Transfer is a gated nearest-neighbor copy: every dynamic scan point takes
the (class, instance) of the closest transformed object point within the
distance threshold, static points keep the reserved static labels, and
anything else stays unassigned. Smoothing then runs iterated conditional
modes on a symmetrized k-NN graph, moving (class, instance) pairs as atomic
labels so an instance can never end up with a foreign semantic class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .model import (Arrangement, STATIC_CLASS, TemporalModel,
                    UNASSIGNED_INSTANCE)

_TIE_MARGIN = 1e-9


@dataclass(frozen=True)
class TransferResult:
    """Labeled scan plus which points actually received a label.

    `assigned` is True for static-masked points and points labeled from an
    object; `unassigned_fraction` counts the rest, relative to the scan's
    non-static points.
    """

    cloud: PointCloud
    assigned: np.ndarray
    unassigned_fraction: float


def transfer_labels(scene: PointCloud, arrangement: Arrangement,
                    model: TemporalModel, static_mask: np.ndarray,
                    max_dist: float = 0.05) -> TransferResult:
    """Copy labels from the nearest posed object point within max_dist.

    Near-ties (within 1e-9) between objects resolve to the lower instance
    id because placements are visited in ascending id order and a later
    object must win by more than the margin.
    """
    if max_dist <= 0.0:
        raise ValueError("max_dist must be positive")
    static_mask = np.asarray(static_mask, dtype=bool)
    if static_mask.shape != (len(scene),):
        raise ValueError("static_mask must align with scene points")
    semantic = np.zeros(len(scene), dtype=np.int32)
    instance = np.full(len(scene), UNASSIGNED_INSTANCE, dtype=np.int32)
    semantic[static_mask] = STATIC_CLASS

    dynamic_ids = np.flatnonzero(~static_mask)
    best = np.full(len(dynamic_ids), np.inf)
    queries = scene.points[dynamic_ids]
    for placed in sorted(arrangement.placements, key=lambda p: p.uid):
        obj = model.resolve(placed.uid)
        tree = cKDTree(placed.pose.apply(obj.geometry.points))
        dist, _ = tree.query(queries, k=1, distance_upper_bound=max_dist,
                             workers=-1)
        better = dist < best - _TIE_MARGIN
        semantic[dynamic_ids[better]] = obj.semantic_class
        instance[dynamic_ids[better]] = placed.uid
        best = np.where(better, dist, best)

    got_label = instance != UNASSIGNED_INSTANCE
    assigned = static_mask | got_label
    n_dynamic = int((~static_mask).sum())
    unassigned = int((~assigned).sum())
    return TransferResult(
        cloud=scene.with_labels(semantic, instance),
        assigned=assigned,
        unassigned_fraction=unassigned / n_dynamic if n_dynamic else 0.0)


def _label_codes(semantic: np.ndarray, instance: np.ndarray,
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Encode (class, instance) pairs as codes; code 0 is the background."""
    pairs = np.stack([semantic.astype(np.int64), instance.astype(np.int64)],
                     axis=1)
    table = np.unique(pairs, axis=0)
    background = np.array([STATIC_CLASS, UNASSIGNED_INSTANCE], dtype=np.int64)
    if not (table == background).all(axis=1).any():
        table = np.vstack([background, table])
    order = np.lexsort((table[:, 0], table[:, 1]))
    table = table[order]
    codes = np.searchsorted(
        table[:, 1] * (1 << 32) + table[:, 0],
        pairs[:, 1] * (1 << 32) + pairs[:, 0])
    return codes, table


def _knn_graph(points: np.ndarray, k: int,
               sigma: float) -> sparse.csr_matrix:
    """Symmetrized k-NN graph with Gaussian edge weights."""
    n = len(points)
    k = min(k, n - 1)
    if k < 1:
        return sparse.csr_matrix((n, n))
    tree = cKDTree(points)
    dist, idx = tree.query(points, k=k + 1, workers=-1)
    rows = np.repeat(np.arange(n), k)
    cols = idx[:, 1:].reshape(-1)
    weights = np.exp(-dist[:, 1:].reshape(-1) ** 2 / (2.0 * sigma * sigma))
    graph = sparse.csr_matrix((weights, (rows, cols)), shape=(n, n))
    return graph.maximum(graph.T)


def labeling_energy(codes: np.ndarray, ref_codes: np.ndarray,
                    assigned: np.ndarray, graph: sparse.csr_matrix,
                    pairwise_weight: float) -> float:
    """Unary-plus-pairwise energy of a labeling; lower is better."""
    unary = np.where(assigned, (codes != ref_codes).astype(np.float64), 0.5)
    upper = sparse.triu(graph, k=1).tocoo()
    cut = codes[upper.row] != codes[upper.col]
    return float(unary.sum() + pairwise_weight * upper.data[cut].sum())


def smooth_labels(cloud: PointCloud, assigned: np.ndarray, neighbors: int = 12,
                  pairwise_weight: float = 1.0, sweeps: int = 5,
                  max_dist: float = 0.05) -> PointCloud:
    """ICM cleanup of a transferred labeling; returns a fully labeled cloud.

    Unassigned points start as background with an indifferent unary, so
    their labels are decided purely by their neighborhoods. Per sweep only
    points with a disagreeing neighbor are revisited; a uniformly
    surrounded point can never lower its cost by flipping.
    """
    if not cloud.has_labels:
        raise ValueError("labels required")
    assigned = np.asarray(assigned, dtype=bool)
    if assigned.shape != (len(cloud),):
        raise ValueError("assigned mask must align with cloud points")
    if len(cloud) == 0:
        return cloud

    ref_codes, table = _label_codes(cloud.semantic_labels, cloud.instance_labels)
    background = int(np.flatnonzero(
        (table[:, 0] == STATIC_CLASS)
        & (table[:, 1] == UNASSIGNED_INSTANCE))[0])
    codes = np.where(assigned, ref_codes, background)
    graph = _knn_graph(cloud.points, neighbors, sigma=max_dist / 2.0)
    n_labels = len(table)

    last_energy = labeling_energy(codes, ref_codes, assigned, graph,
                                  pairwise_weight)
    indptr, indices, weights = graph.indptr, graph.indices, graph.data
    owner = np.repeat(np.arange(len(cloud)), np.diff(indptr))
    for _ in range(sweeps):
        disagree = codes[indices] != codes[owner]
        contested = np.unique(owner[disagree])
        changed = False
        for p in contested:
            sl = slice(indptr[p], indptr[p + 1])
            support = np.zeros(n_labels)
            np.add.at(support, codes[indices[sl]], weights[sl])
            total = weights[sl].sum()
            if assigned[p]:
                unary = np.ones(n_labels)
                unary[ref_codes[p]] = 0.0
            else:
                unary = np.full(n_labels, 0.5)
            cost = unary + pairwise_weight * (total - support)
            current = codes[p]
            best = int(np.argmin(cost))
            if cost[best] < cost[current]:
                codes[p] = best
                changed = True
        energy = labeling_energy(codes, ref_codes, assigned, graph,
                                 pairwise_weight)
        if energy > last_energy + 1e-9:
            raise AssertionError("ICM energy increased")
        last_energy = energy
        if not changed:
            break

    return cloud.with_labels(table[codes, 0].astype(np.int32),
                             table[codes, 1].astype(np.int32))
