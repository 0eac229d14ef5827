"""Procedural desk-scale benchmark scenes with exact ground truth.

Scenes are a walled room plus parametric prototypes (boxes, cylinders,
L-shapes) sampled on half-offset surface grids, so noise-free points lie
exactly on the analytic surfaces. Scripts replay move/add/remove events
per timestep; the generator is its own oracle because it knows every pose
and label that produced a scan.

Identical prototypes are interchangeable in ground truth, so each scene
also emits the permutation set (products of the symmetric groups over
identical-prototype groups) the transfer metrics are allowed to apply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations as _sym_group
from typing import Iterable, Union

import numpy as np

from .cloud import PointCloud, concatenate
from .metrics import GroundTruth, Permutation
from .model import STATIC_CLASS, UNASSIGNED_INSTANCE
from .pose import GroundPose, wrap_angle

_KINDS = ("box", "cylinder", "lshape")
_DIM_COUNT = {"box": 3, "cylinder": 2, "lshape": 5}


@dataclass(frozen=True)
class Prototype:
    """Parametric shape in a bottom-centered local frame.

    dims: box (wx, wy, h); cylinder (radius, h);
    lshape (wx, wy, h, cut_x, cut_y) with the cut at the +x/+y corner.
    """

    kind: str
    dims: tuple[float, ...]
    semantic_class: int

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown prototype kind {self.kind!r}")
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        if len(self.dims) != _DIM_COUNT[self.kind]:
            raise ValueError(f"{self.kind} needs {_DIM_COUNT[self.kind]} dims")
        if any(d <= 0 for d in self.dims):
            raise ValueError("dims must be positive")
        if self.kind == "lshape":
            wx, wy, _, cx, cy = self.dims
            if cx >= wx or cy >= wy:
                raise ValueError("lshape cut must be smaller than the body")
        if self.semantic_class == STATIC_CLASS:
            raise ValueError("semantic class 0 is reserved for static")

    @property
    def symmetry_order(self) -> int:
        """Yaw rotations mapping the shape onto itself; 0 = continuous."""
        if self.kind == "cylinder":
            return 0
        if self.kind == "lshape":
            return 1
        wx, wy = self.dims[0], self.dims[1]
        return 4 if abs(wx - wy) < 1e-9 else 2

    @property
    def footprint_radius(self) -> float:
        if self.kind == "cylinder":
            return self.dims[0]
        return math.hypot(self.dims[0], self.dims[1]) / 2.0


def _grid_offsets(length: float, spacing: float) -> np.ndarray:
    return np.arange(0.5 * spacing, length - 1e-12, spacing)


def _rect_face(origin: np.ndarray, u: np.ndarray, v: np.ndarray,
               len_u: float, len_v: float, normal: np.ndarray,
               spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Half-offset grid over a rectangle spanned by u and v from origin."""
    ou = _grid_offsets(len_u, spacing)
    ov = _grid_offsets(len_v, spacing)
    uu, vv = np.meshgrid(ou, ov, indexing="ij")
    pts = (origin[None, :] + uu.reshape(-1, 1) * u[None, :]
           + vv.reshape(-1, 1) * v[None, :])
    nrm = np.broadcast_to(normal, pts.shape).copy()
    return pts, nrm


def _box_faces(wx: float, wy: float, h: float, spacing: float,
               ) -> list[tuple[np.ndarray, np.ndarray]]:
    ex = np.array([1.0, 0.0, 0.0])
    ey = np.array([0.0, 1.0, 0.0])
    ez = np.array([0.0, 0.0, 1.0])
    lo = np.array([-wx / 2, -wy / 2, 0.0])
    return [
        _rect_face(lo + ez * h, ex, ey, wx, wy, ez, spacing),
        _rect_face(lo, ex, ey, wx, wy, -ez, spacing),
        _rect_face(lo, ey, ez, wy, h, -ex, spacing),
        _rect_face(lo + ex * wx, ey, ez, wy, h, ex, spacing),
        _rect_face(lo, ex, ez, wx, h, -ey, spacing),
        _rect_face(lo + ey * wy, ex, ez, wx, h, ey, spacing),
    ]


def _cylinder_faces(radius: float, h: float, spacing: float,
                    ) -> list[tuple[np.ndarray, np.ndarray]]:
    faces = []
    n_theta = max(3, round(2.0 * math.pi * radius / spacing))
    theta = (np.arange(n_theta) + 0.5) * (2.0 * math.pi / n_theta)
    ring_dir = np.stack([np.cos(theta), np.sin(theta),
                         np.zeros(n_theta)], axis=1)
    zs = _grid_offsets(h, spacing)
    side = (radius * ring_dir)[None, :, :] + np.array(
        [0.0, 0.0, 1.0]) * zs[:, None, None]
    faces.append((side.reshape(-1, 3), np.tile(ring_dir, (len(zs), 1))))
    for z, nz in ((h, 1.0), (0.0, -1.0)):
        pts = []
        for rho in _grid_offsets(radius, spacing):
            m = max(3, round(2.0 * math.pi * rho / spacing))
            ang = (np.arange(m) + 0.5) * (2.0 * math.pi / m)
            pts.append(np.stack([rho * np.cos(ang), rho * np.sin(ang),
                                 np.full(m, z)], axis=1))
        disk = np.concatenate(pts) if pts else np.zeros((0, 3))
        nrm = np.broadcast_to(np.array([0.0, 0.0, nz]), disk.shape).copy()
        faces.append((disk, nrm))
    return faces


def _lshape_faces(wx: float, wy: float, h: float, cx: float, cy: float,
                  spacing: float) -> list[tuple[np.ndarray, np.ndarray]]:
    ex = np.array([1.0, 0.0, 0.0])
    ey = np.array([0.0, 1.0, 0.0])
    ez = np.array([0.0, 0.0, 1.0])
    lo = np.array([-wx / 2, -wy / 2, 0.0])
    # Footprint = full rectangle minus the (cx, cy) corner cut: the top and
    # bottom split into two rectangles each, and two inner walls appear.
    faces = []
    for z, nz in ((h, ez), (0.0, -ez)):
        base = lo + ez * z
        faces.append(_rect_face(base, ex, ey, wx, wy - cy, nz, spacing))
        faces.append(_rect_face(base + ey * (wy - cy), ex, ey,
                                wx - cx, cy, nz, spacing))
    faces.append(_rect_face(lo, ey, ez, wy, h, -ex, spacing))
    faces.append(_rect_face(lo + ex * wx, ey, ez, wy - cy, h, ex, spacing))
    faces.append(_rect_face(lo, ex, ez, wx, h, -ey, spacing))
    faces.append(_rect_face(lo + ey * wy, ex, ez, wx - cx, h, ey, spacing))
    faces.append(_rect_face(lo + ex * (wx - cx) + ey * (wy - cy), ey, ez,
                            cy, h, ex, spacing))
    faces.append(_rect_face(lo + ey * (wy - cy) + ex * (wx - cx), ex, ez,
                            cx, h, ey, spacing))
    return faces


def sample_prototype(proto: Prototype, spacing: float) -> PointCloud:
    """Noise-free surface samples with analytic normals, local frame."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if proto.kind == "box":
        faces = _box_faces(*proto.dims, spacing)
    elif proto.kind == "cylinder":
        faces = _cylinder_faces(*proto.dims, spacing)
    else:
        faces = _lshape_faces(*proto.dims, spacing)
    pts = np.concatenate([f[0] for f in faces])
    nrm = np.concatenate([f[1] for f in faces])
    return PointCloud(pts, normals=nrm)


@dataclass(frozen=True)
class MoveEvent:
    uid: int
    pose: GroundPose


@dataclass(frozen=True)
class AddEvent:
    uid: int
    pose: GroundPose


@dataclass(frozen=True)
class RemoveEvent:
    uid: int


Event = Union[MoveEvent, AddEvent, RemoveEvent]


@dataclass(frozen=True)
class SceneScript:
    """Everything needed to regenerate one scene sequence bit-for-bit."""

    name: str
    room: tuple[float, float, float]
    prototypes: dict[int, Prototype]
    initial_poses: dict[int, GroundPose]
    events: tuple[tuple[Event, ...], ...] = ()
    viewpoints: tuple[tuple[float, float, float], ...] = ()
    noise_sigma: float = 0.003
    seed: int = 0
    object_spacing: float = 0.025
    static_spacing: float = 0.05

    def __post_init__(self) -> None:
        if len(self.room) != 3 or any(r <= 0 for r in self.room):
            raise ValueError("room needs positive (x, y, wall height)")
        unknown = set(self.initial_poses) - set(self.prototypes)
        if unknown:
            raise ValueError(f"initial pose for unknown object {min(unknown)}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    @property
    def n_timesteps(self) -> int:
        return len(self.events) + 1


@dataclass(frozen=True)
class SyntheticSequence:
    """Generated scans plus the ground truth that produced them."""

    script: SceneScript
    scans: list[PointCloud]
    gt: GroundTruth
    poses: list[dict[int, GroundPose]]

    def symmetry_order(self, uid: int) -> int:
        return self.script.prototypes[uid].symmetry_order


def _room_shell(room: tuple[float, float, float],
                spacing: float) -> tuple[np.ndarray, np.ndarray]:
    rx, ry, rz = room
    ex = np.array([1.0, 0.0, 0.0])
    ey = np.array([0.0, 1.0, 0.0])
    ez = np.array([0.0, 0.0, 1.0])
    zero = np.zeros(3)
    faces = [
        _rect_face(zero, ex, ey, rx, ry, ez, spacing),
        _rect_face(zero, ey, ez, ry, rz, ex, spacing),
        _rect_face(ex * rx, ey, ez, ry, rz, -ex, spacing),
        _rect_face(zero, ex, ez, rx, rz, ey, spacing),
        _rect_face(ey * ry, ex, ez, rx, rz, -ey, spacing),
    ]
    return (np.concatenate([f[0] for f in faces]),
            np.concatenate([f[1] for f in faces]))


def _visible(points: np.ndarray, normals: np.ndarray,
             viewpoints: Iterable[tuple[float, float, float]]) -> np.ndarray:
    keep = np.zeros(len(points), dtype=bool)
    for v in viewpoints:
        keep |= np.einsum("nk,nk->n",
                          normals, np.asarray(v, np.float64) - points) > 0.0
    return keep


def _check_layout(script: SceneScript, timestep: int,
                  poses: dict[int, GroundPose]) -> None:
    rx, ry, _ = script.room
    uids = sorted(poses)
    for uid in uids:
        r = script.prototypes[uid].footprint_radius
        p = poses[uid]
        if not (r <= p.tx <= rx - r and r <= p.ty <= ry - r):
            raise ValueError(f"timestep {timestep}: object {uid} leaves the room")
    for i, a in enumerate(uids):
        for b in uids[i + 1:]:
            ra = script.prototypes[a].footprint_radius
            rb = script.prototypes[b].footprint_radius
            d = math.hypot(poses[a].tx - poses[b].tx, poses[a].ty - poses[b].ty)
            if d < ra + rb:
                raise ValueError(
                    f"timestep {timestep}: objects {a} and {b} overlap")


def scene_permutations(prototypes: dict[int, Prototype]) -> list[Permutation]:
    """Identity plus every relabeling within identical-prototype groups."""
    groups: dict[tuple, list[int]] = {}
    for uid in sorted(prototypes):
        proto = prototypes[uid]
        key = (proto.kind, proto.dims, proto.semantic_class)
        groups.setdefault(key, []).append(uid)
    perms: list[Permutation] = [{}]
    for members in groups.values():
        if len(members) < 2:
            continue
        expanded: list[Permutation] = []
        for perm in perms:
            for arrangement in _sym_group(members):
                new = dict(perm)
                new.update({m: a for m, a in zip(members, arrangement)
                            if m != a})
                expanded.append(new)
        perms = expanded
    return perms


def generate_sequence(script: SceneScript) -> SyntheticSequence:
    """Replay a script into labeled scans; the script is the oracle."""
    shell_pts, shell_nrm = _room_shell(script.room, script.static_spacing)
    proto_clouds = {uid: sample_prototype(p, script.object_spacing)
                    for uid, p in script.prototypes.items()}
    viewpoints = script.viewpoints or ((script.room[0] / 2,
                                        script.room[1] / 2,
                                        script.room[2] - 0.1),)

    poses: dict[int, GroundPose] = dict(script.initial_poses)
    _check_layout(script, 0, poses)
    all_poses: list[dict[int, GroundPose]] = []
    scans: list[PointCloud] = []
    for t in range(script.n_timesteps):
        if t > 0:
            for ev in script.events[t - 1]:
                if isinstance(ev, MoveEvent):
                    if ev.uid not in poses:
                        raise ValueError(
                            f"timestep {t}: move of absent object {ev.uid}")
                    poses[ev.uid] = ev.pose
                elif isinstance(ev, AddEvent):
                    if ev.uid in poses:
                        raise ValueError(
                            f"timestep {t}: add of present object {ev.uid}")
                    if ev.uid not in script.prototypes:
                        raise ValueError(
                            f"timestep {t}: add of unknown object {ev.uid}")
                    poses[ev.uid] = ev.pose
                elif isinstance(ev, RemoveEvent):
                    if ev.uid not in poses:
                        raise ValueError(
                            f"timestep {t}: remove of absent object {ev.uid}")
                    del poses[ev.uid]
                else:
                    raise ValueError(f"timestep {t}: unknown event {ev!r}")
            _check_layout(script, t, poses)
        all_poses.append(dict(poses))

        pts = [shell_pts]
        nrm = [shell_nrm]
        sem = [np.full(len(shell_pts), STATIC_CLASS, np.int32)]
        inst = [np.full(len(shell_pts), UNASSIGNED_INSTANCE, np.int32)]
        for uid in sorted(poses):
            local = proto_clouds[uid]
            pts.append(poses[uid].apply(local.points))
            nrm.append(poses[uid].rotate(local.normals))
            sem.append(np.full(len(local), script.prototypes[uid].semantic_class,
                               np.int32))
            inst.append(np.full(len(local), uid, np.int32))
        points = np.concatenate(pts)
        normals = np.concatenate(nrm)
        keep = _visible(points, normals, viewpoints)
        points = points[keep]
        if script.noise_sigma > 0:
            rng = np.random.default_rng([script.seed, 7919, t])
            points = points + rng.normal(0.0, script.noise_sigma,
                                         points.shape)
        scans.append(PointCloud(points, normals[keep],
                                np.concatenate(sem)[keep],
                                np.concatenate(inst)[keep]))

    gt = GroundTruth(scans=scans,
                     permutations=scene_permutations(script.prototypes))
    return SyntheticSequence(script=script, scans=scans, gt=gt,
                             poses=all_poses)


# --- default benchmark suite -------------------------------------------------

_SUITE_COUNTS = (5, 6, 5, 7, 6, 8, 5, 6, 7, 5)
_SUITE_GROUP_SIZES = (3, 4, 3, 0, 3, 4, 3, 3, 4, 3)
_SUITE_GROUP_KINDS = ("box", "cylinder", "box", "", "box",
                      "box", "cylinder", "lshape", "box", "cylinder")
_REMOVAL_SCENES = (2, 5)
_MIN_CLEARANCE = 0.15
_GROUP_SEPARATION = 1.35
_WALL_MARGIN = 0.25


def _draw_position(rng: np.random.Generator, room: tuple[float, float, float],
                   radius: float, others: list[tuple[float, float, float]],
                   group_xy: list[tuple[float, float]],
                   center: tuple[float, float] | None = None,
                   dist_range: tuple[float, float] | None = None,
                   ) -> tuple[float, float] | None:
    """Rejection-sample an in-room position; None after bounded tries."""
    rx, ry, _ = room
    lo_x, hi_x = radius + _WALL_MARGIN, rx - radius - _WALL_MARGIN
    lo_y, hi_y = radius + _WALL_MARGIN, ry - radius - _WALL_MARGIN
    for _ in range(500):
        if center is not None and dist_range is not None:
            d = rng.uniform(*dist_range)
            ang = rng.uniform(0.0, 2.0 * math.pi)
            x = center[0] + d * math.cos(ang)
            y = center[1] + d * math.sin(ang)
            if not (lo_x <= x <= hi_x and lo_y <= y <= hi_y):
                continue
        else:
            x = rng.uniform(lo_x, hi_x)
            y = rng.uniform(lo_y, hi_y)
        if any(math.hypot(x - ox, y - oy) < radius + orad + _MIN_CLEARANCE
               for ox, oy, orad in others):
            continue
        if any(math.hypot(x - gx, y - gy) < _GROUP_SEPARATION
               for gx, gy in group_xy):
            continue
        return x, y
    return None


def _suite_prototypes(rng: np.random.Generator, scene_idx: int,
                      count: int) -> tuple[dict[int, Prototype], list[int]]:
    """Per-scene prototype table; returns (prototypes, identical group uids)."""
    group_size = _SUITE_GROUP_SIZES[scene_idx]
    protos: dict[int, Prototype] = {}
    group_uids: list[int] = []
    next_class = 1

    if group_size:
        kind = _SUITE_GROUP_KINDS[scene_idx]
        if kind == "box":
            w = float(rng.uniform(0.32, 0.42))
            # Scene 4 exercises 4-fold symmetry with a square footprint.
            dims = (w, w if scene_idx == 4 else w + 0.1,
                    float(rng.uniform(0.3, 0.45)))
        elif kind == "cylinder":
            dims = (float(rng.uniform(0.16, 0.2)),
                    float(rng.uniform(0.3, 0.45)))
        else:
            dims = (0.45, 0.4, float(rng.uniform(0.3, 0.4)), 0.22, 0.18)
        shared = Prototype(kind, dims, next_class)
        next_class += 1
        for j in range(group_size):
            protos[j + 1] = shared
            group_uids.append(j + 1)

    kinds = ("box", "cylinder", "lshape")
    for j in range(count - group_size):
        uid = group_size + j + 1
        kind = kinds[(scene_idx + j) % 3]
        if kind == "box":
            dims = (float(rng.uniform(0.3, 0.5)), float(rng.uniform(0.3, 0.5)),
                    float(rng.uniform(0.28, 0.5)))
        elif kind == "cylinder":
            dims = (float(rng.uniform(0.14, 0.24)),
                    float(rng.uniform(0.28, 0.5)))
        else:
            wx = float(rng.uniform(0.36, 0.5))
            wy = float(rng.uniform(0.36, 0.5))
            dims = (wx, wy, float(rng.uniform(0.28, 0.45)),
                    float(rng.uniform(0.35, 0.5)) * wx,
                    float(rng.uniform(0.35, 0.5)) * wy)
        protos[uid] = Prototype(kind, dims, next_class)
        next_class += 1
    return protos, group_uids


def _place_all(rng: np.random.Generator, room: tuple[float, float, float],
               protos: dict[int, Prototype], group_uids: list[int],
               ) -> dict[int, GroundPose]:
    poses: dict[int, GroundPose] = {}
    placed: list[tuple[float, float, float]] = []
    group_xy: list[tuple[float, float]] = []
    for uid in sorted(protos):
        r = protos[uid].footprint_radius
        xy = _draw_position(rng, room, r, placed,
                            group_xy if uid in group_uids else [])
        if xy is None:
            raise RuntimeError("suite placement failed; widen the room")
        poses[uid] = GroundPose(xy[0], xy[1], 0.0,
                                float(rng.uniform(-math.pi, math.pi)))
        placed.append((xy[0], xy[1], r))
        if uid in group_uids:
            group_xy.append(xy)
    return poses


def _move_pose(rng: np.random.Generator, room: tuple[float, float, float],
               protos: dict[int, Prototype], poses: dict[int, GroundPose],
               group_uids: list[int], uid: int) -> GroundPose | None:
    r = protos[uid].footprint_radius
    others = [(p.tx, p.ty, protos[u].footprint_radius)
              for u, p in poses.items() if u != uid]
    group_xy = [(poses[u].tx, poses[u].ty)
                for u in group_uids if u != uid and u in poses]
    cur = poses[uid]
    xy = _draw_position(rng, room, r, others,
                        group_xy if uid in group_uids else [],
                        center=(cur.tx, cur.ty), dist_range=(0.35, 0.7))
    if xy is None:
        return None
    return GroundPose(xy[0], xy[1], 0.0, float(rng.uniform(-math.pi, math.pi)))


def _suite_scene(rng: np.random.Generator, i: int,
                 count: int) -> tuple[tuple[float, float, float],
                                      dict[int, Prototype],
                                      dict[int, GroundPose],
                                      list[list[Event]]]:
    """One scene draw; raises RuntimeError when placement wedges."""
    room = (float(rng.uniform(3.2, 3.6)), float(rng.uniform(3.2, 3.6)),
            float(rng.uniform(1.8, 2.2)))
    protos, group_uids = _suite_prototypes(rng, i, count)
    poses = _place_all(rng, room, protos, group_uids)
    solo_uids = [u for u in sorted(protos) if u not in group_uids]

    removed_uid = solo_uids[-1] if i in _REMOVAL_SCENES else None
    movers: list[list[int]] = [[], [], []]
    pool = [u for u in solo_uids if u != removed_uid]
    for step, uid in zip((0, 1, 2), pool):
        movers[step].append(uid)
    for step, uid in zip((0, 1, 2), group_uids):
        movers[step].append(uid)

    sim_poses = dict(poses)
    events: list[list[Event]] = [[], [], []]
    if removed_uid is not None:
        events[0].append(RemoveEvent(removed_uid))
        del sim_poses[removed_uid]
    for step in range(3):
        for uid in movers[step]:
            new_pose = _move_pose(rng, room, protos, sim_poses,
                                  group_uids, uid)
            if new_pose is None:
                continue
            events[step].append(MoveEvent(uid, new_pose))
            sim_poses[uid] = new_pose
        if step == 2 and removed_uid is not None:
            r = protos[removed_uid].footprint_radius
            others = [(p.tx, p.ty, protos[u].footprint_radius)
                      for u, p in sim_poses.items()]
            xy = _draw_position(rng, room, r, others, [])
            if xy is None:
                raise RuntimeError("re-add placement failed")
            pose = GroundPose(xy[0], xy[1], 0.0,
                              float(rng.uniform(-math.pi, math.pi)))
            events[step].append(AddEvent(removed_uid, pose))
            sim_poses[removed_uid] = pose
    return room, protos, poses, events


def default_suite(seed: int = 0) -> list[SceneScript]:
    """Ten scripted scenes x four timesteps, nine with identical groups.

    Group members move on separate timesteps so a stationary twin always
    anchors identity; scenes 2 and 5 remove an object at t1 and re-add it
    at t3. A wedged placement draw retries the whole scene with a salted
    stream, so every seed yields a suite.
    """
    scripts = []
    for i, count in enumerate(_SUITE_COUNTS):
        for attempt in range(64):
            key = [seed, 101, i] if attempt == 0 else [seed, 101, i, attempt]
            try:
                room, protos, poses, events = _suite_scene(
                    np.random.default_rng(key), i, count)
                break
            except RuntimeError:
                continue
        else:
            raise RuntimeError(f"cannot lay out scene {i} for seed {seed}")

        h = room[2]
        viewpoints = tuple(
            (x, y, h - 0.2)
            for x, y in ((0.45, 0.45), (room[0] - 0.45, 0.45),
                         (room[0] - 0.45, room[1] - 0.45),
                         (0.45, room[1] - 0.45)))
        scripts.append(SceneScript(
            name=f"scene_{i:02d}", room=room, prototypes=protos,
            initial_poses=poses,
            events=tuple(tuple(e) for e in events),
            viewpoints=viewpoints, noise_sigma=0.003,
            seed=int(np.random.default_rng([seed, 211, i]).integers(2 ** 31))))
    return scripts


# --- script (de)serialization ------------------------------------------------

def script_to_dict(script: SceneScript) -> dict:
    def pose_row(p: GroundPose) -> list[float]:
        return [p.tx, p.ty, p.tz, p.yaw]

    events = []
    for step in script.events:
        rows = []
        for ev in step:
            if isinstance(ev, MoveEvent):
                rows.append({"type": "move", "uid": ev.uid,
                             "pose": pose_row(ev.pose)})
            elif isinstance(ev, AddEvent):
                rows.append({"type": "add", "uid": ev.uid,
                             "pose": pose_row(ev.pose)})
            else:
                rows.append({"type": "remove", "uid": ev.uid})
        events.append(rows)
    return {
        "name": script.name,
        "room": list(script.room),
        "prototypes": {str(u): {"kind": p.kind, "dims": list(p.dims),
                                "semantic_class": p.semantic_class}
                       for u, p in script.prototypes.items()},
        "initial_poses": {str(u): pose_row(p)
                          for u, p in script.initial_poses.items()},
        "events": events,
        "viewpoints": [list(v) for v in script.viewpoints],
        "noise_sigma": script.noise_sigma,
        "seed": script.seed,
        "object_spacing": script.object_spacing,
        "static_spacing": script.static_spacing,
    }


def script_from_dict(data: dict) -> SceneScript:
    try:
        protos = {int(u): Prototype(d["kind"], tuple(d["dims"]),
                                    int(d["semantic_class"]))
                  for u, d in data["prototypes"].items()}
        initial = {int(u): GroundPose(*row)
                   for u, row in data["initial_poses"].items()}
        events = []
        for step in data.get("events", []):
            rows: list[Event] = []
            for ev in step:
                if ev["type"] == "move":
                    rows.append(MoveEvent(int(ev["uid"]),
                                          GroundPose(*ev["pose"])))
                elif ev["type"] == "add":
                    rows.append(AddEvent(int(ev["uid"]),
                                         GroundPose(*ev["pose"])))
                elif ev["type"] == "remove":
                    rows.append(RemoveEvent(int(ev["uid"])))
                else:
                    raise ValueError(f"unknown event type {ev['type']!r}")
            events.append(tuple(rows))
        return SceneScript(
            name=str(data["name"]), room=tuple(data["room"]),
            prototypes=protos, initial_poses=initial, events=tuple(events),
            viewpoints=tuple(tuple(v) for v in data.get("viewpoints", [])),
            noise_sigma=float(data.get("noise_sigma", 0.003)),
            seed=int(data.get("seed", 0)),
            object_spacing=float(data.get("object_spacing", 0.025)),
            static_spacing=float(data.get("static_spacing", 0.05)))
    except KeyError as exc:
        raise ValueError(f"script missing field {exc.args[0]!r}") from exc


def equivalent_frame_poses(pose0: GroundPose, pose_t: GroundPose,
                           centroid0_world: np.ndarray,
                           symmetry_order: int) -> list[GroundPose]:
    """GT-equivalent placements for geometry captured (and re-centered at
    its world centroid) under pose0, expressed at timestep t.

    One pose per symmetry branch; cylinders (order 0) get the identity
    branch only and callers should compare translation at the candidate's
    own yaw via `symmetric_translation`.
    """
    orders = max(1, symmetry_order)
    out = []
    for j in range(orders):
        yaw = wrap_angle(pose_t.yaw - pose0.yaw + 2.0 * math.pi * j / orders)
        out.append(GroundPose(*symmetric_translation(
            pose0, pose_t, centroid0_world, yaw), yaw))
    return out


def symmetric_translation(pose0: GroundPose, pose_t: GroundPose,
                          centroid0_world: np.ndarray,
                          frame_yaw: float) -> tuple[float, float, float]:
    """Expected frame translation when the frame is rotated by frame_yaw."""
    shift = np.asarray(centroid0_world, np.float64) - pose0.translation()
    c, s = math.cos(frame_yaw), math.sin(frame_yaw)
    dx = c * shift[0] - s * shift[1]
    dy = s * shift[0] + c * shift[1]
    return (pose_t.tx + dx, pose_t.ty + dy, pose_t.tz + shift[2])
