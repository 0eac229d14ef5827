"""One induction step and whole-sequence orchestration.

A step chains: normals -> static detection -> pose proposal -> arrangement
optimization -> label transfer -> fusion -> model update. Failures carry
the stage name. All randomness derives from (run seed, timestep, stage),
so a rerun with the same inputs is byte-identical.
"""
from __future__ import annotations

import json
import time
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cloud import PointCloud, estimate_normals
from .config import PipelineConfig
from .fusion import fuse_object
from .metrics import (instance_map50, instances_from_labels,
                      semantic_label_miou, sequence_transfer_miou)
from .model import (TemporalModel, bootstrap, instance_segments, load_model,
                    save_model, update_model)
from .objective import hysteresis_score, objective, voxelize_scene, ObjectiveContext
from .optimizer import optimize_arrangement
from .planes import detect_static, mask_near_planes
from .plyio import read_ply, write_ply
from .proposal import ScoredPose, prepare_scene, propose_poses, score_pose
from .sampling import build_hierarchy
from .transfer import smooth_labels, transfer_labels


class PipelineError(RuntimeError):
    """A stage failure; str(err) starts with the stage name."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class StepResult:
    model: TemporalModel
    labeled: PointCloud
    report: dict
    timings: dict[str, float]


def stage_seed(base: int, timestep: int, stage: str) -> int:
    """Deterministic per-stage seed, order-independent across stages."""
    key = [base, timestep, zlib.crc32(stage.encode("ascii"))]
    return int(np.random.default_rng(key).integers(2 ** 31))


def _run_stage(name: str, timings: dict[str, float], fn, *args, **kwargs):
    start = time.perf_counter()
    try:
        out = fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, str(exc)) from exc
    timings[name] = timings.get(name, 0.0) + (time.perf_counter() - start)
    return out


def _propose_all(model: TemporalModel, scene, cfg: PipelineConfig):
    """Candidate poses per object; the last known pose is always included
    so a zero-motion placement stays exactly reachable."""
    tau = cfg.proposal.tau(0)
    index = scene.dynamic_indices[0]
    pose_sets = {}
    counts = {}
    for obj in model.objects:
        candidates = list(propose_poses(obj, scene, cfg.proposal))
        counts[obj.uid] = len(candidates)
        last = model.last_placement(obj.uid)
        if last is not None:
            pose = last[1].pose
            candidates.append(ScoredPose(
                pose=pose, score=score_pose(obj, 0, index, pose, tau)))
        if candidates:
            pose_sets[obj.uid] = candidates
    return pose_sets, counts


def induct_step(model: TemporalModel, scan: PointCloud, cfg: PipelineConfig,
                trace=None) -> StepResult:
    """Advance the model by one scan; incoming labels are ignored."""
    timestep = len(model.history)
    timings: dict[str, float] = {}
    total_start = time.perf_counter()
    scan = scan.without_labels()
    if len(scan) == 0:
        raise PipelineError("normals", "empty scan")

    if not scan.has_normals:
        scan = _run_stage("normals", timings, estimate_normals, scan)
    else:
        timings["normals"] = 0.0

    def _detect():
        hierarchy = build_hierarchy(
            scan, seed=stage_seed(cfg.seed, timestep, "hierarchy"))
        _, planes = detect_static(
            hierarchy.levels[-1],
            inlier_thresh=cfg.detection.inlier_thresh,
            min_inlier_frac=cfg.detection.min_inlier_frac,
            ransac_iters=cfg.detection.ransac_iters,
            seed=stage_seed(cfg.seed, timestep, "ransac"),
            max_planes=cfg.detection.max_planes)
        return mask_near_planes(scan, planes, cfg.detection.inlier_thresh), planes

    static_mask, planes = _run_stage("static-detection", timings, _detect)

    scene = _run_stage(
        "pose-proposal", timings, prepare_scene, scan, static_mask, planes,
        seed=stage_seed(cfg.seed, timestep, "proposal"))
    pose_sets, proposal_counts = _run_stage(
        "pose-proposal", timings, _propose_all, model, scene, cfg)

    def _arrange():
        grid = voxelize_scene(scan, static_mask, cfg.objective.voxel_size)
        ctx = ObjectiveContext(grid, model, cfg.objective)
        anneal_cfg = replace(cfg.anneal,
                             seed=stage_seed(cfg.seed, timestep, "anneal"))
        tau = cfg.proposal.tau(0)
        index = scene.dynamic_indices[0]

        def rescore(uid, pose):
            return score_pose(model.resolve(uid), 0, index, pose, tau)

        arrangement = optimize_arrangement(pose_sets, ctx, timestep,
                                           cfg=anneal_cfg, rescore=rescore,
                                           trace=trace)
        return arrangement, objective(grid, arrangement, model, cfg.objective)

    arrangement, value = _run_stage("arrangement", timings, _arrange)

    def _transfer():
        result = transfer_labels(scan, arrangement, model, static_mask,
                                 max_dist=cfg.transfer.max_dist)
        smoothed = smooth_labels(result.cloud, result.assigned,
                                 neighbors=cfg.transfer.neighbors,
                                 pairwise_weight=cfg.transfer.pairwise_weight,
                                 sweeps=cfg.transfer.sweeps,
                                 max_dist=cfg.transfer.max_dist)
        return smoothed, result.unassigned_fraction

    labeled, unassigned_fraction = _run_stage("transfer", timings, _transfer)

    def _fuse():
        segments = instance_segments(labeled)
        fused = {}
        for placed in arrangement.placements:
            rows = segments.get(placed.uid)
            if rows is None or len(rows) == 0:
                continue
            seed = int(np.random.default_rng(
                [cfg.seed, timestep, zlib.crc32(b"fusion"), placed.uid]
            ).integers(2 ** 31))
            result = fuse_object(model.resolve(placed.uid),
                                 labeled.select(rows), placed.pose, seed=seed)
            if result.observed:
                fused[placed.uid] = result.geometry
        return fused

    fused = _run_stage("fusion", timings, _fuse)
    new_model = _run_stage("model-update", timings,
                           update_model, model, arrangement, fused)
    timings["total"] = time.perf_counter() - total_start

    placed_ids = {p.uid for p in arrangement.placements}
    report = {
        "timestep": timestep,
        "objective": {
            "total": float(value.total),
            "coverage": float(value.coverage),
            "geometry": float(value.geometry),
            "intersection": float(value.intersection),
            "hysteresis": float(value.hysteresis),
        },
        "placements": [{
            "id": int(p.uid),
            "tx": float(p.pose.tx), "ty": float(p.pose.ty),
            "tz": float(p.pose.tz), "yaw": float(p.pose.yaw),
            "score": float(p.score),
            "hysteresis": float(hysteresis_score(
                p, model, cfg.objective.h, cfg.objective.sigma_h,
                cfg.objective.hysteresis_squared)),
        } for p in arrangement.placements],
        "absent_ids": sorted(int(o.uid) for o in model.objects
                             if o.uid not in placed_ids),
        "counts": {
            "points": int(len(scan)),
            "static_points": int(static_mask.sum()),
            "dynamic_points": int(len(scan) - static_mask.sum()),
            "objects": len(model.objects),
            "placed": len(arrangement.placements),
            "fused": len(fused),
            "proposals": {str(uid): int(n)
                          for uid, n in sorted(proposal_counts.items())},
        },
        "transfer": {"unassigned_fraction": float(unassigned_fraction)},
    }
    return StepResult(model=new_model, labeled=labeled, report=report,
                      timings=timings)


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def write_step(out_dir: Path, timestep: int, result: StepResult) -> None:
    save_model(result.model, out_dir / f"model_{timestep:03d}")
    write_ply(out_dir / f"labeled_{timestep:03d}.ply", result.labeled)
    _write_json(out_dir / f"report_{timestep:03d}.json", result.report)
    _write_json(out_dir / f"timing_{timestep:03d}.json",
                {k: round(v, 6) for k, v in result.timings.items()})


def _scan_paths(scene_dir: Path) -> list[Path]:
    paths = sorted(scene_dir.glob("scan_*.ply"))
    if not paths:
        raise PipelineError("input", f"no scan_*.ply under {scene_dir}")
    return paths


def run_sequence(scene_dir: str | Path, out_dir: str | Path,
                 cfg: PipelineConfig, trace_path: str | Path | None = None,
                 ) -> list[dict]:
    """Bootstrap on the first scan, induct the rest, write everything.

    Outputs land incrementally, so on failure the completed steps remain
    on disk.
    """
    scene_dir, out_dir = Path(scene_dir), Path(out_dir)
    scans = _scan_paths(scene_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    first = read_ply(scans[0])
    if not first.has_labels:
        raise PipelineError("bootstrap", "bootstrap requires labels")
    if not first.has_normals:
        first = estimate_normals(first)
    model = bootstrap(first)
    save_model(model, out_dir / "model_000")
    write_ply(out_dir / "labeled_000.ply", first)
    report0 = {
        "timestep": 0,
        "objective": None,
        "placements": [{
            "id": int(p.uid),
            "tx": float(p.pose.tx), "ty": float(p.pose.ty),
            "tz": float(p.pose.tz), "yaw": float(p.pose.yaw),
            "score": float(p.score), "hysteresis": 1.0,
        } for p in model.history[0].placements],
        "absent_ids": [],
        "counts": {"points": int(len(first)),
                   "objects": len(model.objects),
                   "placed": len(model.history[0].placements)},
    }
    _write_json(out_dir / "report_000.json", report0)
    reports = [report0]

    for timestep, path in enumerate(scans[1:], start=1):
        scan = read_ply(path)
        trace = None
        if trace_path is not None:
            base = Path(trace_path)
            trace = open(base.with_name(
                f"{base.stem}_{timestep:03d}{base.suffix or '.csv'}"), "w")
        try:
            result = induct_step(model, scan, cfg, trace=trace)
        finally:
            if trace is not None:
                trace.close()
        write_step(out_dir, timestep, result)
        model = result.model
        reports.append(result.report)
    return reports


def _labeled_path(pred_dir: Path, timestep: int) -> Path:
    for name in (f"labeled_{timestep:03d}.ply", f"scan_{timestep:03d}.ply"):
        candidate = pred_dir / name
        if candidate.exists():
            return candidate
    raise PipelineError(
        "evaluate", f"missing prediction for timestep {timestep} in {pred_dir}")


def _load_permutations(gt_dir: Path) -> list[dict[int, int]]:
    data = json.loads((gt_dir / "gt.json").read_text())
    return [{int(k): int(v) for k, v in perm.items()}
            for perm in data.get("permutations", [])]


def _confidences(pred_dir: Path, timestep: int) -> dict[int, float]:
    path = pred_dir / f"report_{timestep:03d}.json"
    if not path.exists():
        return {}
    report = json.loads(path.read_text())
    return {int(p["id"]): float(p["score"])
            for p in report.get("placements", [])}


def evaluate_scene(pred_dir: str | Path, gt_dir: str | Path) -> dict:
    """Sequence metrics for one scene directory pair.

    The first scan seeds the model with its given labels, so it is the
    source of the transfer, not a prediction: whenever rescans exist,
    metrics cover timesteps >= 1 only. A single-scan scene is scored on
    that scan alone.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    gt_scans = [read_ply(p) for p in _scan_paths(gt_dir)]
    for i, scan in enumerate(gt_scans):
        if not scan.has_labels:
            raise PipelineError("evaluate", f"ground truth scan {i} unlabeled")
    preds = [read_ply(_labeled_path(pred_dir, t))
             for t in range(len(gt_scans))]
    for i, scan in enumerate(preds):
        if not scan.has_labels:
            raise PipelineError("evaluate", f"prediction {i} unlabeled")
    permutations = _load_permutations(gt_dir)
    start = 1 if len(gt_scans) > 1 else 0

    semantic = float(np.mean([
        semantic_label_miou(p.semantic_labels, g.semantic_labels)
        for p, g in zip(preds[start:], gt_scans[start:])]))
    transfer = sequence_transfer_miou(
        [p.instance_labels for p in preds[start:]],
        [g.instance_labels for g in gt_scans[start:]], permutations)
    map50 = float(np.mean([
        instance_map50(
            instances_from_labels(p.semantic_labels, p.instance_labels,
                                  _confidences(pred_dir, t)),
            g.semantic_labels, g.instance_labels)
        for t, (p, g) in enumerate(zip(preds, gt_scans)) if t >= start]))
    return {"scene": gt_dir.name, "transfer_miou": transfer,
            "semantic_miou": semantic, "map50": map50}


def evaluate_dirs(pred_dir: str | Path, gt_dir: str | Path) -> list[dict]:
    """Evaluate one scene or a directory of scene subdirectories."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    if not pred_dir.is_dir():
        raise PipelineError("evaluate", f"not a directory: {pred_dir}")
    if (gt_dir / "gt.json").exists():
        return [evaluate_scene(pred_dir, gt_dir)]
    scenes = sorted(d.name for d in gt_dir.iterdir()
                    if (d / "gt.json").exists())
    if not scenes:
        raise PipelineError("evaluate", f"no gt.json found under {gt_dir}")
    return [evaluate_scene(pred_dir / name, gt_dir / name)
            for name in scenes]
