"""Persistent temporal scene model: objects, arrangement history, storage.

Object geometry lives in an object-local frame centered at the centroid of
the first observation; placement poses map that frame into the scene. Two
label ids are reserved: semantic class 0 is static structure and instance
id 0 means unassigned, so real objects always carry positive ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .cloud import PointCloud, estimate_normals
from .plyio import read_ply, write_ply
from .pose import GroundPose
from .sampling import SamplingHierarchy, build_hierarchy

STATIC_CLASS = 0
UNASSIGNED_INSTANCE = 0

_MANIFEST = "model.json"
_FORMAT = "scenetrack-model"
_VERSION = 1


@dataclass(frozen=True)
class ObjectStats:
    """Centroid and population covariance of an object's geometry."""

    centroid: np.ndarray
    covariance: np.ndarray


def _stats_of(points: np.ndarray) -> ObjectStats:
    centroid = points.mean(axis=0)
    centered = points - centroid
    return ObjectStats(centroid=centroid,
                       covariance=centered.T @ centered / len(points))


@dataclass(frozen=True)
class ObjectInstance:
    """One tracked object: id, class, local-frame geometry, derived caches."""

    uid: int
    semantic_class: int
    geometry: PointCloud
    stats: ObjectStats = field(repr=False)
    hierarchy: SamplingHierarchy = field(repr=False)

    @classmethod
    def from_geometry(cls, uid: int, semantic_class: int,
                      geometry: PointCloud) -> "ObjectInstance":
        """Derive stats and hierarchy; estimates normals when missing."""
        if uid <= 0:
            raise ValueError("instance ids must be positive")
        if len(geometry) == 0:
            raise ValueError("empty object geometry")
        if not geometry.has_normals:
            geometry = estimate_normals(geometry, k=min(16, len(geometry) - 1))
        return cls(uid=uid, semantic_class=semantic_class, geometry=geometry,
                   stats=_stats_of(geometry.points),
                   hierarchy=build_hierarchy(geometry, seed=uid))

    def with_geometry(self, geometry: PointCloud) -> "ObjectInstance":
        return ObjectInstance.from_geometry(self.uid, self.semantic_class,
                                            geometry)


@dataclass(frozen=True)
class PosedObject:
    """Placement of one object: id, scene pose, geometric match score."""

    uid: int
    pose: GroundPose
    score: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "uid", int(self.uid))
        object.__setattr__(self, "score", float(self.score))
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")


@dataclass(frozen=True)
class Arrangement:
    """The placements explaining one timestep's scan."""

    timestep: int
    placements: tuple[PosedObject, ...]

    def __post_init__(self) -> None:
        uids = [p.uid for p in self.placements]
        if len(set(uids)) != len(uids):
            raise ValueError("duplicate instance in arrangement")

    @property
    def uids(self) -> tuple[int, ...]:
        return tuple(p.uid for p in self.placements)

    def placement_for(self, uid: int) -> PosedObject | None:
        for p in self.placements:
            if p.uid == uid:
                return p
        return None


@dataclass(frozen=True)
class TemporalModel:
    """The persistent scene state: object set plus arrangement history."""

    objects: tuple[ObjectInstance, ...]
    history: tuple[Arrangement, ...]
    next_id: int

    def __post_init__(self) -> None:
        uids = [o.uid for o in self.objects]
        if len(set(uids)) != len(uids):
            raise ValueError("duplicate object id")
        for t, arrangement in enumerate(self.history):
            if arrangement.timestep != t:
                raise ValueError("history timesteps must be consecutive from 0")
            for p in arrangement.placements:
                if p.uid not in set(uids):
                    raise ValueError(f"unknown instance {p.uid}")
        if uids and self.next_id <= max(uids):
            raise ValueError("next_id collides with an existing object")

    @cached_property
    def _by_id(self) -> dict[int, ObjectInstance]:
        return {o.uid: o for o in self.objects}

    def resolve(self, uid: int) -> ObjectInstance:
        obj = self._by_id.get(uid)
        if obj is None:
            raise ValueError(f"unknown instance {uid}")
        return obj

    def last_placement(self, uid: int) -> tuple[int, PosedObject] | None:
        """Most recent (timestep, placement) of uid, or None if never placed."""
        for arrangement in reversed(self.history):
            placed = arrangement.placement_for(uid)
            if placed is not None:
                return arrangement.timestep, placed
        return None


def instance_segments(scan: PointCloud) -> dict[int, np.ndarray]:
    """Point index arrays per dynamic instance id, keyed in ascending order."""
    if not scan.has_labels:
        raise ValueError("labels required")
    inst = scan.instance_labels
    dynamic = (inst != UNASSIGNED_INSTANCE) & (scan.semantic_labels != STATIC_CLASS)
    return {int(uid): np.flatnonzero(dynamic & (inst == uid))
            for uid in np.unique(inst[dynamic])}


def bootstrap(scan: PointCloud) -> TemporalModel:
    """Initial model from a fully labeled first scan.

    Scan instance ids are kept as the model's object ids so later metric
    comparisons against the same id space need no remapping.
    """
    segments = instance_segments(scan)
    objects = []
    placements = []
    for uid, idx in segments.items():
        segment = scan.select(idx)
        classes = np.bincount(segment.semantic_labels)
        centroid = segment.centroid()
        local = segment.without_labels().translated(-centroid)
        objects.append(ObjectInstance.from_geometry(
            uid, int(np.argmax(classes)), local))
        placements.append(PosedObject(
            uid=uid, pose=GroundPose(*centroid, yaw=0.0), score=1.0))
    return TemporalModel(objects=tuple(objects),
                         history=(Arrangement(0, tuple(placements)),),
                         next_id=max(segments, default=0) + 1)


def update_model(model: TemporalModel, arrangement: Arrangement,
                 fused: dict[int, PointCloud] | None = None) -> TemporalModel:
    """Append one timestep's arrangement and swap in fused geometries."""
    if arrangement.timestep != len(model.history):
        raise ValueError("timestep mismatch")
    for placed in arrangement.placements:
        model.resolve(placed.uid)
    fused = fused or {}
    for uid in fused:
        model.resolve(uid)
    objects = tuple(obj.with_geometry(fused[obj.uid]) if obj.uid in fused
                    else obj for obj in model.objects)
    return replace(model, objects=objects,
                   history=model.history + (arrangement,))


def _geometry_name(uid: int) -> str:
    return f"object_{uid:06d}.ply"


def save_model(model: TemporalModel, directory: str | Path) -> None:
    """Write model.json plus one PLY per object geometry."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": _FORMAT,
        "version": _VERSION,
        "next_id": model.next_id,
        "objects": [{
            "id": int(obj.uid),
            "class": int(obj.semantic_class),
            "centroid": [float(v) for v in obj.stats.centroid],
            "covariance": [[float(v) for v in row]
                           for row in obj.stats.covariance],
            "geometry": _geometry_name(obj.uid),
        } for obj in model.objects],
        "history": [{
            "timestep": arrangement.timestep,
            "placements": [{
                "id": placed.uid,
                "tx": placed.pose.tx, "ty": placed.pose.ty,
                "tz": placed.pose.tz, "yaw": placed.pose.yaw,
                "score": placed.score,
            } for placed in arrangement.placements],
        } for arrangement in model.history],
    }
    for obj in model.objects:
        write_ply(directory / _geometry_name(obj.uid), obj.geometry)
    with open(directory / _MANIFEST, "w", encoding="ascii") as stream:
        json.dump(manifest, stream, indent=2, sort_keys=True)
        stream.write("\n")


def load_model(directory: str | Path) -> TemporalModel:
    """Inverse of save_model; stats and hierarchies are recomputed."""
    directory = Path(directory)
    with open(directory / _MANIFEST, encoding="ascii") as stream:
        manifest = json.load(stream)
    if manifest.get("format") != _FORMAT or manifest.get("version") != _VERSION:
        raise ValueError("unsupported model format")
    objects = tuple(
        ObjectInstance.from_geometry(entry["id"], entry["class"],
                                     read_ply(directory / entry["geometry"]))
        for entry in manifest["objects"])
    history = tuple(
        Arrangement(entry["timestep"], tuple(
            PosedObject(uid=p["id"],
                        pose=GroundPose(p["tx"], p["ty"], p["tz"], p["yaw"]),
                        score=p["score"])
            for p in entry["placements"]))
        for entry in manifest["history"])
    return TemporalModel(objects=objects, history=history,
                         next_id=manifest["next_id"])
