import numpy as np
import pytest
from scipy import sparse

from scenetrack.cloud import PointCloud, concatenate
from scenetrack.model import (Arrangement, ObjectInstance, PosedObject,
                              TemporalModel)
from scenetrack.pose import GroundPose
from scenetrack.synth import Prototype, sample_prototype
from scenetrack.transfer import labeling_energy, smooth_labels, transfer_labels

_GEO = sample_prototype(Prototype(kind="box", dims=(0.3, 0.25, 0.3),
                                  semantic_class=2), spacing=0.02)
_GEO = _GEO.translated(-_GEO.centroid())


def _model() -> TemporalModel:
    return TemporalModel(
        objects=(ObjectInstance.from_geometry(1, 2, _GEO),
                 ObjectInstance.from_geometry(2, 3, _GEO)),
        history=(), next_id=3)


def _floor(n=20) -> PointCloud:
    xs, ys = np.meshgrid(np.linspace(0, 2, n), np.linspace(0, 2, n))
    return PointCloud(np.column_stack([xs.ravel(), ys.ravel(),
                                       np.zeros(xs.size)]))


def test_transfer_exact_geometry():
    model = _model()
    poses = {1: GroundPose(0.5, 0.5, 0.3, 0.2), 2: GroundPose(1.5, 1.5, 0.3, -0.7)}
    floor = _floor()
    scene = concatenate([floor,
                         PointCloud(poses[1].apply(_GEO.points)),
                         PointCloud(poses[2].apply(_GEO.points))])
    static = np.zeros(len(scene), dtype=bool)
    static[:len(floor)] = True
    arr = Arrangement(0, (PosedObject(1, poses[1], 1.0),
                          PosedObject(2, poses[2], 1.0)))
    result = transfer_labels(scene, arr, model, static)
    labeled = result.cloud
    n, m = len(floor), len(_GEO)
    assert (labeled.semantic_labels[:n] == 0).all()
    assert (labeled.instance_labels[:n] == 0).all()
    assert (labeled.semantic_labels[n:n + m] == 2).all()
    assert (labeled.instance_labels[n:n + m] == 1).all()
    assert (labeled.semantic_labels[n + m:] == 3).all()
    assert (labeled.instance_labels[n + m:] == 2).all()
    assert result.unassigned_fraction == 0.0
    assert result.assigned.all()


def test_transfer_tie_takes_lower_uid():
    model = _model()
    pose = GroundPose(1.0, 1.0, 0.3, 0.0)
    scene = PointCloud(pose.apply(_GEO.points[:1]))
    # placements listed high-id first; the copy still favors the lower id
    arr = Arrangement(0, (PosedObject(2, pose, 1.0),
                          PosedObject(1, pose, 1.0)))
    result = transfer_labels(scene, arr, model, np.zeros(1, dtype=bool))
    assert result.cloud.instance_labels.tolist() == [1]
    assert result.cloud.semantic_labels.tolist() == [2]


def test_transfer_static_points_stay_static():
    model = _model()
    pose = GroundPose(1.0, 1.0, 0.3, 0.0)
    scene = PointCloud(pose.apply(_GEO.points[:4]))
    arr = Arrangement(0, (PosedObject(1, pose, 1.0),))
    static = np.array([True, True, False, False])
    result = transfer_labels(scene, arr, model, static)
    assert result.cloud.semantic_labels.tolist() == [0, 0, 2, 2]
    assert result.cloud.instance_labels.tolist() == [0, 0, 1, 1]


def test_transfer_miss_stays_unassigned():
    model = _model()
    arr = Arrangement(0, (PosedObject(1, GroundPose(0.5, 0.5, 0.3, 0.0), 1.0),))
    scene = PointCloud(np.array([[5.0, 5.0, 0.3], [0.5, 0.5, 0.45]]))
    result = transfer_labels(scene, arr, model, np.zeros(2, dtype=bool))
    assert result.cloud.instance_labels[0] == 0
    assert result.cloud.semantic_labels[0] == 0
    assert not result.assigned[0]
    assert result.cloud.instance_labels[1] == 1
    assert result.unassigned_fraction == 0.5


def test_transfer_validation():
    model = _model()
    scene = PointCloud(np.zeros((3, 3)))
    arr = Arrangement(0, ())
    with pytest.raises(ValueError, match="max_dist must be positive"):
        transfer_labels(scene, arr, model, np.zeros(3, dtype=bool), max_dist=0.0)
    with pytest.raises(ValueError, match="static_mask must align"):
        transfer_labels(scene, arr, model, np.zeros(2, dtype=bool))
    # static-only scene: nothing to assign, fraction well defined
    result = transfer_labels(scene, arr, model, np.ones(3, dtype=bool))
    assert result.unassigned_fraction == 0.0


def _cluster(cx, cy, n=10, spacing=0.01):
    xs, ys = np.meshgrid(np.arange(n) * spacing + cx,
                         np.arange(n) * spacing + cy)
    return np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)])


def test_smoothing_removes_salt_noise():
    pts = np.concatenate([_cluster(0.0, 0.0), _cluster(1.0, 1.0)])
    sem = np.array([2] * 100 + [3] * 100, dtype=np.int32)
    inst = np.array([1] * 100 + [2] * 100, dtype=np.int32)
    for p in (33, 44, 55):  # interior points flipped to the other object
        sem[p], inst[p] = 3, 2
    cloud = PointCloud(pts, semantic_labels=sem, instance_labels=inst)
    out = smooth_labels(cloud, np.ones(200, dtype=bool))
    assert (out.instance_labels[:100] == 1).all()
    assert (out.semantic_labels[:100] == 2).all()
    assert (out.instance_labels[100:] == 2).all()
    pairs = set(zip(out.semantic_labels.tolist(), out.instance_labels.tolist()))
    assert pairs <= {(2, 1), (3, 2)}


def test_smoothing_fills_unassigned_holes():
    pts = _cluster(0.0, 0.0)
    sem = np.full(100, 2, dtype=np.int32)
    inst = np.full(100, 1, dtype=np.int32)
    assigned = np.ones(100, dtype=bool)
    for p in (41, 42, 51):
        sem[p], inst[p] = 0, 0
        assigned[p] = False
    cloud = PointCloud(pts, semantic_labels=sem, instance_labels=inst)
    out = smooth_labels(cloud, assigned)
    assert (out.instance_labels == 1).all()
    assert (out.semantic_labels == 2).all()


def test_smoothing_validation():
    cloud = PointCloud(np.zeros((2, 3)) + np.arange(2)[:, None])
    with pytest.raises(ValueError, match="labels required"):
        smooth_labels(cloud, np.ones(2, dtype=bool))
    labeled = cloud.with_labels(np.zeros(2, dtype=np.int32),
                                np.zeros(2, dtype=np.int32))
    with pytest.raises(ValueError, match="assigned mask must align"):
        smooth_labels(labeled, np.ones(3, dtype=bool))


def test_labeling_energy_hand_trace():
    w = 0.8
    graph = sparse.csr_matrix(np.array([[0.0, w], [w, 0.0]]))
    ref = np.array([0, 1])
    assigned = np.ones(2, dtype=bool)
    # agreeing with the reference costs only the cut edge
    assert labeling_energy(np.array([0, 1]), ref, assigned, graph,
                           1.0) == pytest.approx(w)
    # uniform labeling: one unary violation, no cut
    assert labeling_energy(np.array([0, 0]), ref, assigned, graph,
                           1.0) == pytest.approx(1.0)
    # unassigned points pay a flat 0.5 regardless of label
    assert labeling_energy(np.array([0, 0]), ref, np.zeros(2, dtype=bool),
                           graph, 1.0) == pytest.approx(1.0)
    assert labeling_energy(np.array([0, 1]), ref, np.zeros(2, dtype=bool),
                           graph, 2.0) == pytest.approx(1.0 + 2.0 * w)
