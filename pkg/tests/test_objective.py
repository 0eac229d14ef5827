import math

import numpy as np
import pytest

from scenetrack.cloud import PointCloud
from scenetrack.model import (Arrangement, ObjectInstance, PosedObject,
                              TemporalModel)
from scenetrack.objective import (ObjectiveContext, ObjectiveWeights,
                                  combine_terms, coverage_term, geometry_term,
                                  hysteresis_score, hysteresis_term,
                                  intersection_term, objective, voxelize_scene)
from scenetrack.pose import GroundPose
from scenetrack.voxel import VoxelGrid, build_grid


def _octahedron(uid: int, a: float = 0.3) -> ObjectInstance:
    """Six axis points: centroid 0, covariance exactly (a^2 / 3) I."""
    pts = np.array([[a, 0, 0], [-a, 0, 0], [0, a, 0],
                    [0, -a, 0], [0, 0, a], [0, 0, -a]], dtype=float)
    return ObjectInstance.from_geometry(uid, 2, PointCloud(pts))


def _box_object(box_cloud, uid: int = 1) -> ObjectInstance:
    centered = box_cloud.translated(-box_cloud.centroid())
    return ObjectInstance.from_geometry(uid, 2, centered.without_labels())


# ---------------------------------------------------------------- voxel grid

def test_build_grid_cells():
    grid = build_grid(np.array([[0, 0, 0], [0.06, 0, 0], [0.12, 0, 0.0]]), 0.05)
    assert grid.dims == (3, 1, 1)
    assert grid.occupied.tolist() == [0, 1, 2]
    assert grid.cell_of([[-0.01, 0, 0]]).tolist() == [-1]
    assert grid.cell_of([[0.16, 0, 0]]).tolist() == [-1]
    assert grid.cell_of([[0.14, 0, 0]]).tolist() == [2]
    with pytest.raises(ValueError, match="voxel_size"):
        build_grid(np.zeros((1, 3)), 0.0)


def test_occupied_cells_filter():
    grid = VoxelGrid(origin=np.zeros(3), voxel_size=0.05, dims=(4, 1, 1),
                     occupied=np.array([0, 2], dtype=np.int64))
    pts = [[0.01, 0, 0], [0.06, 0, 0], [0.11, 0, 0], [9.0, 0, 0]]
    assert grid.occupied_cells_of(pts).tolist() == [0, 2]
    empty = build_grid(np.zeros((0, 3)), 0.05)
    assert empty.n_occupied == 0
    assert len(empty.occupied_cells_of(pts)) == 0


def test_voxelize_scene_marks_only_dynamic():
    pts = np.array([[0, 0, 0], [1.0, 0, 0], [0.5, 0, 0]])
    scene = PointCloud(pts)
    grid = voxelize_scene(scene, np.array([True, True, False]), 0.05)
    assert grid.dims[0] == 21  # full scan bounding box, static included
    assert grid.n_occupied == 1
    assert grid.occupied_cells_of([[0.51, 0, 0]]).tolist() == [grid.occupied[0]]
    with pytest.raises(ValueError, match="static_mask must align"):
        voxelize_scene(scene, np.zeros(2, dtype=bool), 0.05)
    assert voxelize_scene(PointCloud(np.zeros((0, 3))),
                          np.zeros(0, dtype=bool), 0.05).n_occupied == 0


# ------------------------------------------------------------------- weights

def test_weights_validation():
    with pytest.raises(ValueError, match="non-negative"):
        ObjectiveWeights(w_c=-1.0)
    for h in (0.0, 1.0):
        with pytest.raises(ValueError, match="h must be"):
            ObjectiveWeights(h=h)
    with pytest.raises(ValueError, match="positive"):
        ObjectiveWeights(sigma_r=0.0)


def test_all_ones_total():
    assert combine_terms(ObjectiveWeights(), 1.0, 1.0, 1.0, 1.0) == 5.1


# -------------------------------------------------------------------- terms

def test_hysteresis_novel_is_floor():
    model = TemporalModel(objects=(_octahedron(1),), history=(), next_id=2)
    placed = PosedObject(1, GroundPose(3.0, 1.0, 0.0, 0.5), 1.0)
    assert hysteresis_score(placed, model, 0.4, 0.5) == 0.4


def test_hysteresis_zero_motion_is_one():
    pose = GroundPose(1.0, 2.0, 0.0, 0.7)
    model = TemporalModel(
        objects=(_octahedron(1),),
        history=(Arrangement(0, (PosedObject(1, pose, 1.0),)),), next_id=2)
    assert hysteresis_score(PosedObject(1, pose, 1.0), model, 0.4, 0.5) == 1.0


def test_hysteresis_distance_falloff():
    model = TemporalModel(
        objects=(_octahedron(1),),
        history=(Arrangement(0, (PosedObject(1, GroundPose(), 1.0),)),),
        next_id=2)
    moved = PosedObject(1, GroundPose(0.3, 0.0, 0.0, 0.0), 1.0)
    want = 0.4 + 0.6 * math.exp(-0.3 / (2 * 0.5 ** 2))
    assert math.isclose(hysteresis_score(moved, model, 0.4, 0.5), want,
                        rel_tol=1e-12)
    want_sq = 0.4 + 0.6 * math.exp(-0.3 ** 2 / (2 * 0.5 ** 2))
    assert math.isclose(hysteresis_score(moved, model, 0.4, 0.5, squared=True),
                        want_sq, rel_tol=1e-12)


def test_hysteresis_term_mean():
    model = TemporalModel(
        objects=(_octahedron(1), _octahedron(2)),
        history=(Arrangement(0, (PosedObject(1, GroundPose(), 1.0),)),),
        next_id=3)
    arr = Arrangement(1, (PosedObject(1, GroundPose(0.3, 0, 0, 0), 1.0),
                          PosedObject(2, GroundPose(5, 5, 0, 0), 1.0)))
    want = ((0.4 + 0.6 * math.exp(-0.3 / 0.5)) + 0.4) / 2.0
    assert math.isclose(hysteresis_term(arr, model, 0.4, 0.5), want,
                        rel_tol=1e-12)
    assert hysteresis_term(Arrangement(1, ()), model, 0.4, 0.5) == 0.0


def test_intersection_coincident_and_far():
    model = TemporalModel(objects=(_octahedron(1), _octahedron(2)),
                          history=(), next_id=3)
    pose = GroundPose(1.0, 1.0, 0.0, 0.3)
    both = Arrangement(0, (PosedObject(1, pose, 1.0),
                           PosedObject(2, pose, 1.0)))
    assert abs(intersection_term(both, model, 0.25)) <= 1e-12
    apart = Arrangement(0, (PosedObject(1, GroundPose(), 1.0),
                            PosedObject(2, GroundPose(4, 0, 0, 0), 1.0)))
    assert intersection_term(apart, model, 0.25) > 0.999
    solo = Arrangement(0, (PosedObject(1, pose, 1.0),))
    assert intersection_term(solo, model, 0.25) == 1.0
    assert intersection_term(Arrangement(0, ()), model, 0.25) == 1.0


def test_intersection_hand_value():
    # covariance (0.03 + 1e-6) I, centroids 0.4 apart, midpoint 0.2 from each
    model = TemporalModel(objects=(_octahedron(1), _octahedron(2)),
                          history=(), next_id=3)
    arr = Arrangement(0, (PosedObject(1, GroundPose(), 1.0),
                          PosedObject(2, GroundPose(0.4, 0, 0, 0), 1.0)))
    d_sq = 0.2 ** 2 / (0.3 ** 2 / 3 + 1e-6)
    want = 1.0 - math.exp(-d_sq / (2 * 0.25 ** 2))
    assert math.isclose(intersection_term(arr, model, 0.25), want,
                        rel_tol=1e-9)


def test_geometry_term_mean():
    arr = Arrangement(0, (PosedObject(1, GroundPose(), 0.8),
                          PosedObject(2, GroundPose(1, 0, 0, 0), 0.4)))
    assert math.isclose(geometry_term(arr), 0.6, rel_tol=1e-12)
    assert geometry_term(Arrangement(0, ())) == 0.0


def test_coverage_full_partial_none(box_cloud):
    obj = _box_object(box_cloud)
    model = TemporalModel(objects=(obj,), history=(), next_id=2)
    gt = GroundPose(2.0, 1.0, 0.25, 0.4)
    scene = PointCloud(gt.apply(obj.geometry.points))
    grid = voxelize_scene(scene, np.zeros(len(scene), dtype=bool), 0.05)

    def cov(pose):
        return coverage_term(grid, Arrangement(
            0, (PosedObject(1, pose, 1.0),)), model)

    at_gt = cov(gt)
    assert at_gt > 0.85
    shifted = cov(GroundPose(2.15, 1.0, 0.25, 0.4))
    assert 0.0 < shifted < at_gt
    assert cov(GroundPose(9.0, 9.0, 0.25, 0.4)) == 0.0
    assert coverage_term(grid, Arrangement(0, ()), model) == 0.0


def test_coverage_empty_grid_warns(box_cloud, caplog):
    obj = _box_object(box_cloud)
    model = TemporalModel(objects=(obj,), history=(), next_id=2)
    scene = PointCloud(obj.geometry.points)
    grid = voxelize_scene(scene, np.ones(len(scene), dtype=bool), 0.05)
    with caplog.at_level("WARNING", logger="scenetrack.objective"):
        got = coverage_term(grid, Arrangement(
            0, (PosedObject(1, GroundPose(), 1.0),)), model)
    assert got == 0.0
    assert "no dynamic content" in caplog.text


# --------------------------------------------------------- combined/context

def test_empty_arrangement_value(box_cloud):
    obj = _box_object(box_cloud)
    model = TemporalModel(objects=(obj,), history=(), next_id=2)
    scene = PointCloud(obj.geometry.points)
    grid = voxelize_scene(scene, np.zeros(len(scene), dtype=bool), 0.05)
    value = objective(grid, Arrangement(0, ()), model, ObjectiveWeights())
    assert (value.coverage, value.geometry, value.hysteresis) == (0.0, 0.0, 0.0)
    assert value.intersection == 1.0
    assert value.total == 1.0


def test_context_matches_direct_evaluation(box_cloud):
    objs = (_box_object(box_cloud, 1), _box_object(box_cloud, 2))
    pose0 = GroundPose(0.6, 0.4, 0.25, 0.0)
    model = TemporalModel(
        objects=objs,
        history=(Arrangement(0, (PosedObject(1, pose0, 1.0),)),), next_id=3)
    scene = PointCloud(np.concatenate([
        pose0.apply(objs[0].geometry.points),
        GroundPose(1.8, 0.4, 0.25, 0.8).apply(objs[1].geometry.points)]))
    weights = ObjectiveWeights()
    grid = voxelize_scene(scene, np.zeros(len(scene), dtype=bool),
                          weights.voxel_size)
    ctx = ObjectiveContext(grid, model, weights)
    candidates = [
        [],
        [PosedObject(1, pose0, 0.9)],
        [PosedObject(1, pose0, 0.9), PosedObject(2, pose0, 0.7)],
        [PosedObject(1, pose0, 0.9),
         PosedObject(2, GroundPose(1.8, 0.4, 0.25, 0.8), 0.7)],
    ]
    for placements in candidates:
        via_ctx = ctx.evaluate(placements)
        direct = objective(grid, Arrangement(1, tuple(placements)), model,
                           weights)
        for name in ("total", "coverage", "geometry", "intersection",
                     "hysteresis"):
            assert math.isclose(getattr(via_ctx, name), getattr(direct, name),
                                rel_tol=0.0, abs_tol=1e-12), name
    # cached second pass returns identical values
    again = ctx.evaluate(candidates[-1])
    assert again == ctx.evaluate(candidates[-1])
