import numpy as np
import pytest
from scipy.spatial import cKDTree

from scenetrack.cloud import PointCloud
from scenetrack.fusion import FUSION_BIN, fuse_object
from scenetrack.model import ObjectInstance
from scenetrack.pose import GroundPose
from scenetrack.synth import Prototype, sample_prototype


def _plane_cloud(spacing=0.02, base=0.003, n=12) -> PointCloud:
    xs, ys = np.meshgrid(np.arange(n) * spacing + base,
                         np.arange(n) * spacing + base)
    pts = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)])
    return PointCloud(pts, normals=np.tile([0.0, 0.0, 1.0], (len(pts), 1)))


def test_empty_segment_is_a_no_op():
    obj = ObjectInstance.from_geometry(1, 2, _plane_cloud())
    result = fuse_object(obj, PointCloud(np.zeros((0, 3))), GroundPose())
    assert result.observed is False
    assert result.geometry is obj.geometry


def test_segment_needs_normals():
    obj = ObjectInstance.from_geometry(1, 2, _plane_cloud())
    with pytest.raises(ValueError, match="normals required"):
        fuse_object(obj, PointCloud(np.zeros((4, 3)) + 0.1), GroundPose())


def test_bin_mean_averages_offset_copies():
    # spacing chosen so no grid point sits near a 1 cm bin boundary; each
    # offset copy then shares its partner's bin and the fused point is the
    # pair mean
    geo = _plane_cloud(spacing=0.0241, base=0.0)
    pose = GroundPose(1.0, 0.5, 0.3, 0.7)
    segment = geo.translated([0.001, 0.0, 0.0]).transformed(pose)
    result = fuse_object(ObjectInstance.from_geometry(1, 2, geo),
                         segment, pose)
    assert result.observed is True
    want = np.sort(geo.points + [0.0005, 0.0, 0.0], axis=0)
    got = np.sort(result.geometry.points, axis=0)
    assert got.shape == want.shape
    np.testing.assert_allclose(got, want, atol=1e-9)
    np.testing.assert_allclose(result.geometry.normals,
                               np.tile([0.0, 0.0, 1.0],
                                       (len(result.geometry), 1)), atol=1e-9)


def test_opposing_normals_fall_back_to_stored():
    pts = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]])
    up = np.tile([0.0, 0.0, 1.0], (2, 1))
    obj = ObjectInstance.from_geometry(1, 2, PointCloud(pts, normals=up))
    segment = PointCloud(pts, normals=-up)
    result = fuse_object(obj, segment, GroundPose())
    assert len(result.geometry) == 2
    np.testing.assert_allclose(np.abs(result.geometry.normals[:, 2]), 1.0)
    assert not np.isnan(result.geometry.normals).any()


def test_fused_density_stays_bounded():
    geo = _plane_cloud(spacing=0.005, base=0.0, n=24)
    pose = GroundPose(0.2, 0.0, 0.0, 0.0)
    segment = geo.translated([0.002, 0.001, 0.0]).transformed(pose)
    result = fuse_object(ObjectInstance.from_geometry(1, 2, geo),
                         segment, pose)
    pts = result.geometry.points
    dists = np.linalg.norm(pts[None, :, :] - pts[:, None, :], axis=-1)
    np.fill_diagonal(dists, np.inf)
    assert dists.min() >= FUSION_BIN - 1e-12
    assert len(pts) > 0


def test_complementary_halves_complete_the_surface():
    full = sample_prototype(Prototype(kind="box", dims=(0.4, 0.3, 0.5),
                                      semantic_class=2), spacing=0.02)
    full = full.translated(-full.centroid())
    left = full.select(np.flatnonzero(full.points[:, 0] < 0.0))
    right = full.select(np.flatnonzero(full.points[:, 0] >= 0.0))
    obj = ObjectInstance.from_geometry(1, 2, left)
    pose = GroundPose(2.0, 1.0, 0.25, 0.9)

    def coverage(cloud: PointCloud) -> float:
        dist, _ = cKDTree(cloud.points).query(full.points, k=1)
        return float((dist <= 0.02).mean())

    before = coverage(obj.geometry)
    result = fuse_object(obj, right.transformed(pose), pose)
    after = coverage(result.geometry)
    assert before < 0.7
    assert after >= 0.95
    assert len(result.geometry) > len(left)
