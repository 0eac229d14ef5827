"""Evaluation metrics: semantic mIoU, instance mAP, transfer mIoU, pose PR.

Instance ids are only meaningful up to the swaps a scene allows between
physically identical objects, so the transfer metrics take an explicit
permutation set and score against the best relabeling. The sequence
variant commits to a single permutation for the whole sequence, which is
what makes identity flips between timesteps show up as errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cloud import PointCloud
from .model import STATIC_CLASS, UNASSIGNED_INSTANCE

Permutation = dict[int, int]


@dataclass(frozen=True)
class GroundTruth:
    """Labeled reference scans plus the scene's allowed instance swaps."""

    scans: list[PointCloud]
    permutations: list[Permutation] = field(default_factory=list)


@dataclass(frozen=True)
class InstancePrediction:
    """One predicted instance: its point rows, class, and confidence."""

    indices: np.ndarray
    semantic_class: int
    confidence: float


def _check_aligned(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape or pred.ndim != 1:
        raise ValueError("mismatched point counts")
    return pred, gt


def semantic_label_miou(pred: np.ndarray, gt: np.ndarray,
                        ignore_static: bool = True) -> float:
    """Mean per-class IoU over the classes present in gt."""
    pred, gt = _check_aligned(pred, gt)
    classes = np.unique(gt)
    if ignore_static:
        classes = classes[classes != STATIC_CLASS]
    if len(classes) == 0:
        return 1.0
    ious = []
    for c in classes:
        inter = np.count_nonzero((pred == c) & (gt == c))
        union = np.count_nonzero((pred == c) | (gt == c))
        ious.append(inter / union if union else 1.0)
    return float(np.mean(ious))


def instances_from_labels(semantic: np.ndarray, instance: np.ndarray,
                          confidences: dict[int, float] | None = None,
                          ) -> list[InstancePrediction]:
    """Split a labeled cloud into per-instance predictions, ascending id.

    Each instance's class is the majority vote over its points, which
    tolerates a few smoothing leaks at instance boundaries.
    """
    semantic, instance = _check_aligned(semantic, instance)
    preds = []
    for uid in np.unique(instance):
        if uid == UNASSIGNED_INSTANCE:
            continue
        rows = np.flatnonzero(instance == uid)
        votes = np.bincount(semantic[rows])
        conf = 1.0 if confidences is None else confidences.get(int(uid), 1.0)
        preds.append(InstancePrediction(rows, int(votes.argmax()), float(conf)))
    return preds


def _mask_iou(a: np.ndarray, b: np.ndarray, n: int) -> float:
    mask_a = np.zeros(n, dtype=bool)
    mask_a[a] = True
    inter = np.count_nonzero(mask_a[b])
    union = len(a) + len(b) - inter
    return inter / union if union else 0.0


def _average_precision(tp_flags: list[bool], n_gt: int) -> float:
    """Area under the precision envelope of a ranked detection list."""
    if n_gt == 0:
        return 1.0
    if not tp_flags:
        return 0.0
    tp = np.cumsum(tp_flags)
    ranks = np.arange(1, len(tp_flags) + 1)
    precision = tp / ranks
    recall = tp / n_gt
    # Envelope: best precision achievable at or beyond each recall level.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_recall = 0.0
    for r, p in zip(recall, envelope):
        ap += (r - prev_recall) * p
        prev_recall = r
    return float(ap)


def instance_map50(predictions: Sequence[InstancePrediction],
                   gt_semantic: np.ndarray, gt_instance: np.ndarray,
                   iou_thresh: float = 0.5) -> float:
    """Mean average precision at a fixed point-set IoU threshold.

    Confidence-ranked predictions greedily claim the best still-unmatched
    ground-truth instance of their class; a claim below the IoU threshold
    is a false positive.
    """
    gt_semantic, gt_instance = _check_aligned(gt_semantic, gt_instance)
    n = len(gt_semantic)
    gt_by_class: dict[int, list[np.ndarray]] = {}
    for uid in np.unique(gt_instance):
        if uid == UNASSIGNED_INSTANCE:
            continue
        rows = np.flatnonzero(gt_instance == uid)
        cls = int(np.bincount(gt_semantic[rows]).argmax())
        if cls == STATIC_CLASS:
            continue
        gt_by_class.setdefault(cls, []).append(rows)
    if not gt_by_class:
        return 1.0

    aps = []
    for cls, gt_masks in sorted(gt_by_class.items()):
        ranked = sorted(
            (p for p in predictions if p.semantic_class == cls),
            key=lambda p: -p.confidence)
        claimed = [False] * len(gt_masks)
        flags = []
        for pred in ranked:
            best_iou, best_gt = 0.0, -1
            for gi, rows in enumerate(gt_masks):
                if claimed[gi]:
                    continue
                iou = _mask_iou(pred.indices, rows, n)
                if iou > best_iou:
                    best_iou, best_gt = iou, gi
            if best_iou >= iou_thresh:
                claimed[best_gt] = True
                flags.append(True)
            else:
                flags.append(False)
        aps.append(_average_precision(flags, len(gt_masks)))
    return float(np.mean(aps))


def _permuted(labels: np.ndarray, perm: Permutation) -> np.ndarray:
    if not perm:
        return labels
    uniq, inverse = np.unique(labels, return_inverse=True)
    remapped = np.array([perm.get(int(u), int(u)) for u in uniq])
    return remapped[inverse]


def _transfer_miou_fixed(pred: np.ndarray, gt: np.ndarray,
                         perm: Permutation, pooled: bool) -> float:
    gt = _permuted(gt, perm)
    uids = np.unique(gt)
    uids = uids[uids != UNASSIGNED_INSTANCE]
    if len(uids) == 0:
        return 1.0
    inters, unions, ious = [], [], []
    for uid in uids:
        inter = np.count_nonzero((pred == uid) & (gt == uid))
        union = np.count_nonzero((pred == uid) | (gt == uid))
        inters.append(inter)
        unions.append(union)
        ious.append(inter / union if union else 1.0)
    if pooled:
        total = sum(unions)
        return sum(inters) / total if total else 1.0
    return float(np.mean(ious))


def instance_transfer_miou(pred: np.ndarray, gt: np.ndarray,
                           permutations: Sequence[Permutation] = (),
                           pooled: bool = False) -> float:
    """Per-instance IoU against gt, maximized over allowed relabelings."""
    pred, gt = _check_aligned(pred, gt)
    perms: Sequence[Permutation] = permutations or [{}]
    return max(_transfer_miou_fixed(pred, gt, p, pooled) for p in perms)


def sequence_transfer_miou(preds: Sequence[np.ndarray],
                           gts: Sequence[np.ndarray],
                           permutations: Sequence[Permutation] = (),
                           pooled: bool = False) -> float:
    """Transfer mIoU over a sequence under one shared relabeling.

    A prediction that swaps two identical objects mid-sequence cannot be
    rescued by per-timestep permutations; scoring every timestep under the
    same one makes such flips cost recall.
    """
    if len(preds) != len(gts):
        raise ValueError("mismatched sequence lengths")
    if not preds:
        return 1.0
    perms: Sequence[Permutation] = permutations or [{}]
    best = -1.0
    for perm in perms:
        vals = [_transfer_miou_fixed(*_check_aligned(p, g), perm, pooled)
                for p, g in zip(preds, gts)]
        best = max(best, float(np.mean(vals)))
    return best


@dataclass(frozen=True)
class PrPoint:
    cutoff: int
    precision: float
    recall: float


def pose_pr(pred: Sequence[tuple[int, np.ndarray]],
            gt: Sequence[tuple[int, np.ndarray]],
            cutoffs: Sequence[int] | None = None,
            max_dist: float = 0.2) -> list[PrPoint]:
    """Precision/recall over ranked (class, center) pose detections.

    A prediction is a true positive when an unmatched ground-truth pose of
    the same class sits within max_dist of its center; each ground truth
    matches at most once. Precision at a cutoff divides by the number of
    predictions actually available there.
    """
    matched = [False] * len(gt)
    hits = []
    for cls, center in pred:
        center = np.asarray(center, dtype=np.float64)
        best_d, best_g = max_dist, -1
        for gi, (gcls, gcenter) in enumerate(gt):
            if matched[gi] or gcls != cls:
                continue
            d = float(np.linalg.norm(center - np.asarray(gcenter, np.float64)))
            if d < best_d:
                best_d, best_g = d, gi
        if best_g >= 0:
            matched[best_g] = True
            hits.append(True)
        else:
            hits.append(False)

    if cutoffs is None:
        cutoffs = range(1, len(pred) + 1)
    table = []
    for k in cutoffs:
        n_at_k = min(k, len(hits))
        tp = sum(hits[:n_at_k])
        precision = tp / n_at_k if n_at_k else 1.0
        recall = tp / len(gt) if gt else 1.0
        table.append(PrPoint(int(k), float(precision), float(recall)))
    return table


def _solve_cost(cost: np.ndarray) -> float:
    if cost.shape[0] == 0 or cost.shape[1] == 0:
        return 0.0
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].sum())


def hungarian_assign(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost assignment; ties resolve to the lexicographically
    smallest pair list in row order.

    The solver's arbitrary tie choices are replaced by a fix-and-verify
    pass: each row takes the smallest column that still permits an optimal
    completion.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.size == 0:
        return []
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix must be finite")
    n_rows, n_cols = cost.shape
    best = _solve_cost(cost)
    tol = 1e-9 * max(1.0, abs(best))

    pairs: list[tuple[int, int]] = []
    free_rows = list(range(n_rows))
    free_cols = list(range(n_cols))
    fixed_cost = 0.0
    for i in range(n_rows):
        free_rows.remove(i)
        chosen = None
        for c in free_cols:
            rest = cost[np.ix_(free_rows, [x for x in free_cols if x != c])]
            total = fixed_cost + cost[i, c] + _solve_cost(rest)
            if total <= best + tol:
                chosen = c
                break
        if chosen is None:
            # Row stays unassigned (more rows than columns).
            rest = cost[np.ix_(free_rows, free_cols)]
            assert fixed_cost + _solve_cost(rest) <= best + tol
            continue
        pairs.append((i, chosen))
        free_cols.remove(chosen)
        fixed_cost += cost[i, chosen]
    return pairs
