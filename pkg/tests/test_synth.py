import json
import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from scenetrack.pose import GroundPose
from scenetrack.synth import (AddEvent, MoveEvent, Prototype, RemoveEvent,
                              SceneScript, default_suite,
                              equivalent_frame_poses, generate_sequence,
                              sample_prototype, scene_permutations,
                              script_from_dict, script_to_dict,
                              symmetric_translation)


# ------------------------------------------------------------- prototypes

def test_prototype_validation():
    with pytest.raises(ValueError, match="unknown prototype kind"):
        Prototype("sphere", (0.3,), 2)
    with pytest.raises(ValueError, match="needs 2 dims"):
        Prototype("cylinder", (0.3, 0.4, 0.5), 2)
    with pytest.raises(ValueError, match="dims must be positive"):
        Prototype("box", (0.3, -0.1, 0.5), 2)
    with pytest.raises(ValueError, match="cut must be smaller"):
        Prototype("lshape", (0.4, 0.3, 0.5, 0.4, 0.1), 2)
    with pytest.raises(ValueError, match="reserved for static"):
        Prototype("box", (0.3, 0.3, 0.3), 0)


def test_symmetry_orders_and_footprints():
    assert Prototype("box", (0.4, 0.3, 0.5), 2).symmetry_order == 2
    assert Prototype("box", (0.4, 0.4, 0.5), 2).symmetry_order == 4
    assert Prototype("cylinder", (0.2, 0.5), 2).symmetry_order == 0
    assert Prototype("lshape", (0.5, 0.4, 0.3, 0.2, 0.2), 2).symmetry_order == 1
    assert Prototype("cylinder", (0.2, 0.5), 2).footprint_radius == 0.2
    assert Prototype("box", (0.3, 0.4, 0.5), 2).footprint_radius == \
        pytest.approx(0.25)


def _on_box_surface(pts, wx, wy, h, tol=1e-9):
    hx, hy = wx / 2, wy / 2
    inside = ((np.abs(pts[:, 0]) <= hx + tol) & (np.abs(pts[:, 1]) <= hy + tol)
              & (pts[:, 2] >= -tol) & (pts[:, 2] <= h + tol))
    on_face = (np.isclose(np.abs(pts[:, 0]), hx, atol=tol)
               | np.isclose(np.abs(pts[:, 1]), hy, atol=tol)
               | np.isclose(pts[:, 2], 0.0, atol=tol)
               | np.isclose(pts[:, 2], h, atol=tol))
    return inside & on_face


def test_box_samples_lie_on_the_surface():
    wx, wy, h = 0.4, 0.3, 0.5
    cloud = sample_prototype(Prototype("box", (wx, wy, h), 2), 0.02)
    assert _on_box_surface(cloud.points, wx, wy, h).all()
    # every normal is an outward axis direction
    axis = np.abs(cloud.normals)
    assert np.isclose(axis.max(axis=1), 1.0).all()
    side_x = np.isclose(np.abs(cloud.points[:, 0]), wx / 2)
    agree = np.sign(cloud.normals[side_x, 0]) == np.sign(cloud.points[side_x, 0])
    assert (agree | np.isclose(cloud.normals[side_x, 0], 0.0)).all()


def test_cylinder_samples_lie_on_the_surface():
    r, h = 0.2, 0.4
    cloud = sample_prototype(Prototype("cylinder", (r, h), 2), 0.02)
    rad = np.hypot(cloud.points[:, 0], cloud.points[:, 1])
    side = np.abs(cloud.normals[:, 2]) < 1e-12
    assert np.allclose(rad[side], r, atol=1e-12)
    np.testing.assert_allclose(
        cloud.normals[side, :2], cloud.points[side, :2] / r, atol=1e-12)
    caps = cloud.points[~side]
    assert np.isin(np.round(caps[:, 2], 12), (0.0, h)).all()
    assert (rad[~side] <= r + 1e-12).all()


def test_lshape_cut_is_empty():
    wx, wy, h, cx, cy = 0.5, 0.4, 0.3, 0.2, 0.15
    cloud = sample_prototype(Prototype("lshape", (wx, wy, h, cx, cy), 2), 0.02)
    pts = cloud.points
    in_cut = ((pts[:, 0] > wx / 2 - cx + 1e-9)
              & (pts[:, 1] > wy / 2 - cy + 1e-9))
    assert not in_cut.any()
    assert (pts[:, 2] >= -1e-12).all() and (pts[:, 2] <= h + 1e-12).all()
    assert np.allclose(np.linalg.norm(cloud.normals, axis=1), 1.0)
    with pytest.raises(ValueError, match="spacing must be positive"):
        sample_prototype(Prototype("box", (0.3, 0.3, 0.3), 2), 0.0)


# ----------------------------------------------------------------- scripts

def _tiny_script(**kw) -> SceneScript:
    proto = Prototype("box", (0.4, 0.3, 0.5), 2)
    args = dict(name="tiny", room=(3.0, 3.0, 2.0),
                prototypes={1: proto, 2: proto},
                initial_poses={1: GroundPose(1.0, 1.0, 0.0, 0.2),
                               2: GroundPose(2.2, 2.0, 0.0, -0.4)},
                noise_sigma=0.0)
    args.update(kw)
    return SceneScript(**args)


def test_script_validation():
    with pytest.raises(ValueError, match="room needs positive"):
        _tiny_script(room=(3.0, -1.0, 2.0))
    with pytest.raises(ValueError, match="unknown object 5"):
        _tiny_script(initial_poses={5: GroundPose(1, 1, 0, 0)})
    with pytest.raises(ValueError, match="noise_sigma"):
        _tiny_script(noise_sigma=-0.01)
    assert _tiny_script().n_timesteps == 1


def test_event_errors():
    cases = [
        ((MoveEvent(9, GroundPose(1, 1, 0, 0)),), "move of absent object 9"),
        ((AddEvent(1, GroundPose(1, 1, 0, 0)),), "add of present object 1"),
        ((AddEvent(9, GroundPose(1, 1, 0, 0)),), "add of unknown object 9"),
        ((RemoveEvent(9),), "remove of absent object 9"),
    ]
    for events, message in cases:
        with pytest.raises(ValueError, match=message):
            generate_sequence(_tiny_script(events=(events,)))


def test_layout_errors():
    with pytest.raises(ValueError, match="object 1 leaves the room"):
        generate_sequence(_tiny_script(
            initial_poses={1: GroundPose(0.05, 1.0, 0.0, 0.0)}))
    with pytest.raises(ValueError, match="objects 1 and 2 overlap"):
        generate_sequence(_tiny_script(
            events=(((MoveEvent(1, GroundPose(2.25, 2.0, 0.0, 0.0)),)),)))


def test_generated_points_lie_on_analytic_surfaces():
    script = _tiny_script()
    seq = generate_sequence(script)
    assert len(seq.scans) == 1
    scan = seq.scans[0]
    for uid, pose in seq.poses[0].items():
        rows = scan.instance_labels == uid
        local = pose.inverse().apply(scan.points[rows])
        assert _on_box_surface(local, 0.4, 0.3, 0.5).all()
        assert (scan.semantic_labels[rows] == 2).all()
    static = scan.points[scan.semantic_labels == 0]
    rx, ry, _ = script.room
    on_shell = (np.isclose(static[:, 2], 0.0)
                | np.isclose(static[:, 0], 0.0) | np.isclose(static[:, 0], rx)
                | np.isclose(static[:, 1], 0.0) | np.isclose(static[:, 1], ry))
    assert on_shell.all()


def test_downward_faces_are_culled():
    seq = generate_sequence(_tiny_script())
    assert (seq.scans[0].normals[:, 2] >= -1e-12).all()


def test_generation_is_bit_exact():
    script = _tiny_script(noise_sigma=0.004, seed=123,
                          events=((MoveEvent(1, GroundPose(1.4, 1.0, 0, 0)),),))
    a = generate_sequence(script)
    b = generate_sequence(script)
    for scan_a, scan_b in zip(a.scans, b.scans):
        np.testing.assert_array_equal(scan_a.points, scan_b.points)
        np.testing.assert_array_equal(scan_a.instance_labels,
                                      scan_b.instance_labels)
    # noise is per-timestep: the two scans differ beyond the moved object
    assert not np.array_equal(a.scans[0].points[:100], a.scans[1].points[:100])


def test_script_json_round_trip():
    script = default_suite(seed=3)[2]
    data = json.loads(json.dumps(script_to_dict(script)))
    back = script_from_dict(data)
    assert back == script
    data_missing = dict(data)
    del data_missing["room"]
    with pytest.raises(ValueError, match="script missing field 'room'"):
        script_from_dict(data_missing)
    data_bad = json.loads(json.dumps(data))
    data_bad["events"][0][0]["type"] = "teleport"
    with pytest.raises(ValueError, match="unknown event type 'teleport'"):
        script_from_dict(data_bad)


# ------------------------------------------------------------ permutations

def test_scene_permutations_identity_first():
    box = Prototype("box", (0.4, 0.3, 0.5), 2)
    other = Prototype("cylinder", (0.2, 0.4), 3)
    perms = scene_permutations({1: box, 2: box, 3: box, 4: other})
    assert perms[0] == {}
    assert len(perms) == 6
    for perm in perms[1:]:
        assert set(perm) <= {1, 2, 3}
        assert sorted(perm.values()) == sorted(perm)
    two_groups = scene_permutations({1: box, 2: box, 3: other, 4: other})
    assert len(two_groups) == 4


def test_no_identical_prototypes_means_identity_only():
    a = Prototype("box", (0.4, 0.3, 0.5), 2)
    b = Prototype("box", (0.4, 0.3, 0.5), 3)  # same shape, different class
    assert scene_permutations({1: a, 2: b}) == [{}]


# ------------------------------------------------------------ default suite

def test_default_suite_structure():
    scripts = default_suite(seed=0)
    assert [s.name for s in scripts] == [f"scene_{i:02d}" for i in range(10)]
    assert [len(s.prototypes) for s in scripts] == \
        [5, 6, 5, 7, 6, 8, 5, 6, 7, 5]
    for i, script in enumerate(scripts):
        assert script.n_timesteps == 4
        assert script.noise_sigma == 0.003
        removals = [ev for step in script.events for ev in step
                    if isinstance(ev, RemoveEvent)]
        adds = [ev for step in script.events for ev in step
                if isinstance(ev, AddEvent)]
        if i in (2, 5):
            assert len(removals) == 1 and len(adds) == 1
            assert removals[0].uid == adds[0].uid
        else:
            assert not removals and not adds
        # identical-prototype groups exist in all but scene 3
        perms = scene_permutations(script.prototypes)
        if i == 3:
            assert perms == [{}]
        else:
            assert len(perms) >= 6
        # group members move on distinct timesteps: a stationary twin
        # always anchors the group identity
        group_uids = {uid for perm in perms for uid in perm}
        for step in script.events:
            movers = [ev.uid for ev in step if isinstance(ev, MoveEvent)
                      and ev.uid in group_uids]
            assert len(movers) <= 1


def test_removal_scene_generates():
    script = default_suite(seed=0)[2]
    seq = generate_sequence(script)
    removed = [ev for ev in script.events[0]
               if isinstance(ev, RemoveEvent)][0].uid
    assert removed in seq.poses[0]
    assert removed not in seq.poses[1] and removed not in seq.poses[2]
    assert removed in seq.poses[3]
    assert not (seq.scans[1].instance_labels == removed).any()
    assert (seq.scans[3].instance_labels == removed).any()
    assert seq.symmetry_order(removed) in (0, 1, 2, 4)


# ----------------------------------------------------- symmetry-aware poses

def test_symmetric_translation_hand_case():
    pose0 = GroundPose(0.0, 0.0, 0.0, 0.0)
    pose_t = GroundPose(1.0, 0.0, 0.0, math.pi / 2)
    c0w = np.array([0.2, 0.0, 0.5])
    branches = equivalent_frame_poses(pose0, pose_t, c0w, 2)
    assert len(branches) == 2
    first, second = branches
    assert (first.tx, first.ty, first.tz) == \
        pytest.approx((1.0, 0.2, 0.5), abs=1e-12)
    assert first.yaw == pytest.approx(math.pi / 2)
    assert (second.tx, second.ty) == pytest.approx((1.0, -0.2), abs=1e-12)
    assert second.yaw == pytest.approx(-math.pi / 2)
    tx, ty, tz = symmetric_translation(pose0, pose_t, c0w, 0.0)
    assert (tx, ty, tz) == pytest.approx((1.2, 0.0, 0.5))


def test_equivalent_poses_land_on_the_same_surface():
    proto = Prototype("box", (0.4, 0.4, 0.3), 2)  # 4-fold symmetric
    sample = sample_prototype(proto, 0.025)
    pose0 = GroundPose(1.0, 1.0, 0.0, 0.3)
    pose_t = GroundPose(2.0, 1.5, 0.0, 1.1)
    world0 = pose0.apply(sample.points)
    c0w = world0.mean(axis=0)
    captured = world0 - c0w  # frame the way a bootstrapped object is stored
    target = cKDTree(pose_t.apply(sample.points))
    for branch in equivalent_frame_poses(pose0, pose_t, c0w, 4):
        dist, _ = target.query(branch.apply(captured), k=1)
        assert dist.max() < 1e-9
