"""Ground-plane point-to-plane ICP, for one pose or many poses in lock step.

Motion is restricted to translation plus rotation about gravity, so each
iteration solves a 3x3 normal-equation system for (tx, ty, yaw); tz is
carried through untouched. A step is committed only when the error measured
on the refreshed correspondences does not rise, which keeps the recorded
per-iteration error sequence non-increasing.

The batch entry point advances many initializations against one target in
lock step so the expensive nearest-neighbor pass is a single tree query per
iteration. The grid search in the proposal stage depends on this.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .pose import GroundPose
from .spatial import SpatialIndex

_LINE_SEARCH = (1.0, 0.5, 0.25, 0.125)
_REVERT_SLACK = 1e-12
# cap on poses * source points held in flight at once
_CHUNK_POINT_ROWS = 1_500_000


@dataclass(frozen=True)
class IcpResult:
    """Converged alignment of one source cloud against a target index."""

    pose: GroundPose
    rmse: float
    n_correspondences: int
    iterations: int
    converged: bool
    underconstrained: bool


@dataclass(frozen=True)
class BatchIcpResult:
    """Per-pose results of a lock-step run; row i refines init row i.

    `params` rows are (tx, ty, tz, yaw). Poses with no correspondences at
    their initialization keep their init row and report rmse = inf with
    zero correspondences.
    """

    params: np.ndarray
    rmse: np.ndarray
    n_correspondences: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    underconstrained: np.ndarray

    def __len__(self) -> int:
        return len(self.params)

    def pose(self, i: int) -> GroundPose:
        tx, ty, tz, yaw = self.params[i]
        return GroundPose(tx, ty, tz, yaw)


def _transformed(src: np.ndarray, params: np.ndarray) -> np.ndarray:
    """Source under every pose row: (P, N, 3)."""
    cos = np.cos(params[:, 3])[:, None]
    sin = np.sin(params[:, 3])[:, None]
    x = src[None, :, 0]
    y = src[None, :, 1]
    out = np.empty((len(params), len(src), 3))
    out[:, :, 0] = cos * x - sin * y + params[:, 0][:, None]
    out[:, :, 1] = sin * x + cos * y + params[:, 1][:, None]
    out[:, :, 2] = src[None, :, 2] + params[:, 2][:, None]
    return out


def _correspond(index: SpatialIndex, moved: np.ndarray,
                corr_dist: float) -> tuple[np.ndarray, np.ndarray]:
    """Gated nearest neighbors for every (pose, point) pair."""
    n_target = len(index.points)
    _, idx = index.tree.query(moved.reshape(-1, 3), k=1,
                              distance_upper_bound=corr_dist, workers=-1)
    idx = idx.reshape(moved.shape[:2])
    valid = idx < n_target
    return np.where(valid, idx, 0).astype(np.int64), valid


def _masked_mse(moved: np.ndarray, q: np.ndarray, n: np.ndarray,
                valid: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Mean squared point-to-plane residual per pose; inf when count is 0."""
    r = np.einsum("pnk,pnk->pn", moved - q, n)
    r = np.where(valid, r, 0.0)
    mse = np.einsum("pn,pn->p", r, r) / np.maximum(counts, 1)
    return np.where(counts > 0, mse, np.inf)


def _lockstep(src: np.ndarray, index: SpatialIndex, init: np.ndarray,
              max_iters: int, corr_dist: float, tol: float) -> BatchIcpResult:
    tgt_pts = index.points
    tgt_nrm = index.normals
    params = init.copy()
    n_poses = len(params)

    moved = _transformed(src, params)
    corr_idx, corr_valid = _correspond(index, moved, corr_dist)
    counts = corr_valid.sum(axis=1)
    mse = _masked_mse(moved, tgt_pts[corr_idx], tgt_nrm[corr_idx],
                      corr_valid, counts)

    iterations = np.zeros(n_poses, dtype=np.int64)
    converged = np.zeros(n_poses, dtype=bool)
    underconstrained = np.zeros(n_poses, dtype=bool)
    dead = counts == 0

    for _ in range(max_iters):
        act = np.flatnonzero(~(converged | dead))
        if len(act) == 0:
            break
        moved = _transformed(src, params[act])
        q = tgt_pts[corr_idx[act]]
        nrm = tgt_nrm[corr_idx[act]]
        valid = corr_valid[act]

        r = np.einsum("ank,ank->an", moved - q, nrm)
        lever = (nrm[:, :, 1] * (moved[:, :, 0] - params[act, 0, None])
                 - nrm[:, :, 0] * (moved[:, :, 1] - params[act, 1, None]))
        jac = np.stack([nrm[:, :, 0], nrm[:, :, 1], lever], axis=-1)
        jac = np.where(valid[:, :, None], jac, 0.0)
        r = np.where(valid, r, 0.0)
        jtj = np.einsum("ani,anj->aij", jac, jac)
        g = np.einsum("ani,an->ai", jac, r)

        evals = np.linalg.eigvalsh(jtj)
        weak = (evals[:, 2] <= 0.0) | (evals[:, 0] < 1e-9 * evals[:, 2])
        underconstrained[act[weak]] = True
        delta = np.zeros((len(act), 3))
        strong = ~weak
        if strong.any():
            delta[strong] = np.linalg.solve(jtj[strong],
                                            -g[strong][..., None])[..., 0]
        for i in np.flatnonzero(weak):
            delta[i] = np.linalg.pinv(jtj[i], hermitian=True,
                                      rcond=1e-10) @ -g[i]

        # backtracking on the frozen correspondence set
        applied = np.zeros((len(act), 3))
        accepted = np.zeros(len(act), dtype=bool)
        for step in _LINE_SEARCH:
            rem = np.flatnonzero(~accepted)
            if len(rem) == 0:
                break
            cand = params[act[rem]].copy()
            cand[:, [0, 1, 3]] += step * delta[rem]
            cand_mse = _masked_mse(_transformed(src, cand), q[rem], nrm[rem],
                                   valid[rem], counts[act[rem]])
            better = cand_mse < mse[act[rem]]
            hit = rem[better]
            applied[hit] = step * delta[hit]
            accepted[hit] = True
        converged[act[~accepted]] = True
        if not accepted.any():
            continue

        # re-correspond the stepped poses; commit only non-increasing error
        stp = act[accepted]
        trial = params[stp].copy()
        trial[:, [0, 1, 3]] += applied[accepted]
        moved = _transformed(src, trial)
        new_idx, new_valid = _correspond(index, moved, corr_dist)
        new_counts = new_valid.sum(axis=1)
        new_mse = _masked_mse(moved, tgt_pts[new_idx], tgt_nrm[new_idx],
                              new_valid, new_counts)
        worse = new_mse > mse[stp] + _REVERT_SLACK
        converged[stp[worse]] = True
        keep = stp[~worse]
        if len(keep) == 0:
            continue
        kept = ~worse
        params[keep] = trial[kept]
        corr_idx[keep] = new_idx[kept]
        corr_valid[keep] = new_valid[kept]
        counts[keep] = new_counts[kept]
        mse[keep] = new_mse[kept]
        iterations[keep] += 1
        tiny = np.abs(applied[accepted][kept]).max(axis=1) < tol
        converged[keep[tiny]] = True

    return BatchIcpResult(params=params, rmse=np.sqrt(mse),
                          n_correspondences=counts, iterations=iterations,
                          converged=converged | dead,
                          underconstrained=underconstrained)


def icp_ground_batch(src_points: np.ndarray, target_index: SpatialIndex,
                     init_params: np.ndarray, max_iters: int = 30,
                     corr_dist: float = 0.1, tol: float = 1e-6) -> BatchIcpResult:
    """Refine every (tx, ty, tz, yaw) row of init_params against the target."""
    if corr_dist <= 0.0:
        raise ValueError("corr_dist must be positive")
    src = np.ascontiguousarray(src_points, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 3 or len(src) == 0:
        raise ValueError("source points must be a non-empty (N, 3) array")
    if target_index.tree is None:
        raise ValueError("empty target")
    if target_index.normals is None:
        raise ValueError("target normals required")
    init = np.ascontiguousarray(init_params, dtype=np.float64)
    if init.ndim != 2 or init.shape[1] != 4:
        raise ValueError("init_params must be (P, 4)")
    if len(init) == 0:
        empty = np.zeros(0)
        return BatchIcpResult(params=init.reshape(0, 4), rmse=empty,
                              n_correspondences=empty.astype(np.int64),
                              iterations=empty.astype(np.int64),
                              converged=empty.astype(bool),
                              underconstrained=empty.astype(bool))
    chunk = max(1, _CHUNK_POINT_ROWS // len(src))
    parts = [_lockstep(src, target_index, init[i:i + chunk],
                       max_iters, corr_dist, tol)
             for i in range(0, len(init), chunk)]
    if len(parts) == 1:
        return parts[0]
    return BatchIcpResult(
        params=np.concatenate([p.params for p in parts]),
        rmse=np.concatenate([p.rmse for p in parts]),
        n_correspondences=np.concatenate([p.n_correspondences for p in parts]),
        iterations=np.concatenate([p.iterations for p in parts]),
        converged=np.concatenate([p.converged for p in parts]),
        underconstrained=np.concatenate([p.underconstrained for p in parts]))


def icp_point_to_plane(source: PointCloud, target_index: SpatialIndex,
                       init: GroundPose | None = None, max_iters: int = 30,
                       corr_dist: float = 0.1, tol: float = 1e-6) -> IcpResult:
    """Align one cloud; raises "no overlap" when the init gates out all points."""
    if init is None:
        init = GroundPose()
    row = np.array([[init.tx, init.ty, init.tz, init.yaw]])
    batch = icp_ground_batch(source.points, target_index, row,
                             max_iters=max_iters, corr_dist=corr_dist, tol=tol)
    if batch.n_correspondences[0] == 0:
        raise ValueError("no overlap")
    return IcpResult(pose=batch.pose(0), rmse=float(batch.rmse[0]),
                     n_correspondences=int(batch.n_correspondences[0]),
                     iterations=int(batch.iterations[0]),
                     converged=bool(batch.converged[0]),
                     underconstrained=bool(batch.underconstrained[0]))
