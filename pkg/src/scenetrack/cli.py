"""Command-line front end.

Exit codes: 0 success, 1 pipeline failure, 2 unreadable or unparseable
input. One induction step at a time per model directory, enforced with a
lock file next to it.
"""
from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import os
import sys
from pathlib import Path

from .cloud import estimate_normals
from .config import PipelineConfig, load_config
from .model import load_model, save_model
from .pipeline import (PipelineError, evaluate_dirs, induct_step,
                       run_sequence, stage_seed)
from .planes import detect_static, mask_near_planes
from .plyio import PlyError, read_ply, write_ply
from .proposal import prepare_scene, propose_poses
from .sampling import build_hierarchy
from .synth import default_suite, generate_sequence, script_to_dict
from .viz import VIZ_MODES, export_labeled, export_model


@contextlib.contextmanager
def _model_lock(model_dir: Path):
    lock = model_dir.parent / (model_dir.name + ".lock")
    lock.parent.mkdir(parents=True, exist_ok=True)
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise PipelineError(
            "lock", f"model directory busy (remove {lock} if stale)")
    try:
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(OSError):
            os.unlink(lock)


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ValueError("seed must be >= 0")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def _cmd_induct(args) -> int:
    model = load_model(args.model_dir)
    scan = read_ply(args.scan)
    cfg = _config(args)
    out = Path(args.out_model_dir)
    with _model_lock(out):
        trace = open(args.trace, "w") if args.trace else None
        try:
            result = induct_step(model, scan, cfg, trace=trace)
        finally:
            if trace is not None:
                trace.close()
        save_model(result.model, out)
        write_ply(out / "labeled.ply", result.labeled)
        _write_json(out / "report.json", result.report)
        _write_json(out / "timing.json",
                    {k: round(v, 6) for k, v in result.timings.items()})
    report = result.report
    print(f"timestep {report['timestep']}: placed "
          f"{report['counts']['placed']}/{report['counts']['objects']} "
          f"objects, objective {report['objective']['total']:.4f}, "
          f"absent {report['absent_ids']}")
    return 0


def _cmd_run(args) -> int:
    cfg = _config(args)
    out = Path(args.out_dir)
    with _model_lock(out):
        reports = run_sequence(args.scene_dir, out, cfg,
                               trace_path=args.trace)
    print(f"{len(reports)} timesteps -> {out}")
    return 0


def _cmd_evaluate(args) -> int:
    rows = evaluate_dirs(args.pred_dir, args.gt_dir)
    print("scene,transfer_miou,semantic_miou,map50")
    for row in rows:
        print(f"{row['scene']},{row['transfer_miou']:.6f},"
              f"{row['semantic_miou']:.6f},{row['map50']:.6f}")
    n = len(rows)
    means = {key: sum(r[key] for r in rows) / n
             for key in ("transfer_miou", "semantic_miou", "map50")}
    print(f"mean over {n} scene(s): "
          f"transfer {means['transfer_miou']:.4f}, "
          f"semantic {means['semantic_miou']:.4f}, "
          f"map50 {means['map50']:.4f}")
    return 0


def _cmd_synth(args) -> int:
    scripts = default_suite(seed=args.seed if args.seed is not None else 0)
    if args.scene is not None:
        if not 0 <= args.scene < len(scripts):
            raise ValueError(f"scene index out of range 0..{len(scripts) - 1}")
        scripts = [scripts[args.scene]]
    out = Path(args.out_dir)
    for script in scripts:
        scene_dir = out / script.name
        scene_dir.mkdir(parents=True, exist_ok=True)
        seq = generate_sequence(script)
        for t, scan in enumerate(seq.scans):
            write_ply(scene_dir / f"scan_{t:03d}.ply", scan)
        _write_json(scene_dir / "gt.json", {
            "permutations": [{str(k): int(v) for k, v in perm.items()}
                             for perm in seq.gt.permutations],
            "poses": [{str(uid): [p.tx, p.ty, p.tz, p.yaw]
                       for uid, p in sorted(by_uid.items())}
                      for by_uid in seq.poses],
            "symmetry_orders": {
                str(uid): seq.symmetry_order(uid)
                for uid in sorted(script.prototypes)},
        })
        _write_json(scene_dir / "script.json", script_to_dict(script))
        print(f"{scene_dir}: {len(seq.scans)} scans, "
              f"{len(script.prototypes)} objects")
    return 0


def _cmd_export_viz(args) -> int:
    source = Path(args.input)
    if source.is_dir():
        model = load_model(source)
        count = export_model(args.out, model, timestep=args.timestep,
                             mode=args.viz_mode)
        print(f"{count} points -> {args.out}")
    else:
        cloud = read_ply(source)
        export_labeled(args.out, cloud, mode=args.viz_mode)
        print(f"{len(cloud)} points -> {args.out}")
    return 0


def _cmd_propose(args) -> int:
    model = load_model(args.model_dir)
    scan = read_ply(args.scan).without_labels()
    cfg = _config(args)
    timestep = len(model.history)
    if not scan.has_normals:
        scan = estimate_normals(scan)
    hierarchy = build_hierarchy(
        scan, seed=stage_seed(cfg.seed, timestep, "hierarchy"))
    _, planes = detect_static(
        hierarchy.levels[-1],
        inlier_thresh=cfg.detection.inlier_thresh,
        min_inlier_frac=cfg.detection.min_inlier_frac,
        ransac_iters=cfg.detection.ransac_iters,
        seed=stage_seed(cfg.seed, timestep, "ransac"),
        max_planes=cfg.detection.max_planes)
    static_mask = mask_near_planes(scan, planes, cfg.detection.inlier_thresh)
    scene = prepare_scene(scan, static_mask, planes,
                          seed=stage_seed(cfg.seed, timestep, "proposal"))
    dump = {}
    for obj in model.objects:
        poses = propose_poses(obj, scene, cfg.proposal)
        dump[str(obj.uid)] = [{
            "tx": p.pose.tx, "ty": p.pose.ty, "tz": p.pose.tz,
            "yaw": p.pose.yaw, "score": p.score} for p in poses]
    text = json.dumps(dump, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _add_common(sub, config=True, seed=True, trace=False):
    if config:
        sub.add_argument("--config", help="JSON config file")
    if seed:
        sub.add_argument("--seed", type=int, default=None,
                         help="override the run seed")
    if trace:
        sub.add_argument("--trace", default=None,
                         help="write per-step optimizer traces to this path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenetrack",
        description="Temporal scene model induction over rescans.")
    commands = parser.add_subparsers(dest="command", required=True)

    induct = commands.add_parser(
        "induct", help="advance a model by one scan")
    induct.add_argument("model_dir")
    induct.add_argument("scan")
    induct.add_argument("out_model_dir")
    _add_common(induct, trace=True)
    induct.set_defaults(func=_cmd_induct)

    run = commands.add_parser(
        "run", help="bootstrap on scan_000 and induct the rest")
    run.add_argument("scene_dir")
    run.add_argument("out_dir")
    _add_common(run, trace=True)
    run.set_defaults(func=_cmd_run)

    evaluate = commands.add_parser(
        "evaluate", help="score predictions against ground truth")
    evaluate.add_argument("pred_dir")
    evaluate.add_argument("gt_dir")
    evaluate.set_defaults(func=_cmd_evaluate)

    synth = commands.add_parser(
        "synth", help="write the synthetic benchmark suite")
    synth.add_argument("out_dir")
    synth.add_argument("--scene", type=int, default=None,
                       help="emit a single scene by index")
    _add_common(synth, config=False)
    synth.set_defaults(func=_cmd_synth)

    viz = commands.add_parser(
        "export-viz", help="colored PLY from a labeled scan or model dir")
    viz.add_argument("input", help="labeled PLY file or model directory")
    viz.add_argument("out")
    viz.add_argument("--viz-mode", choices=VIZ_MODES, default="instance")
    viz.add_argument("--timestep", type=int, default=None,
                     help="arrangement to compose (model input only)")
    viz.set_defaults(func=_cmd_export_viz)

    propose = commands.add_parser(
        "propose", help="dump candidate poses per object as JSON")
    propose.add_argument("model_dir")
    propose.add_argument("scan")
    propose.add_argument("--out", default=None)
    _add_common(propose)
    propose.set_defaults(func=_cmd_propose)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (PlyError, json.JSONDecodeError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
