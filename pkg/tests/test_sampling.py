import numpy as np
import pytest

from scenetrack.cloud import PointCloud
from scenetrack.sampling import (HIERARCHY_SPACINGS, build_hierarchy,
                                 poisson_disk_indices, poisson_disk_subsample)

from conftest import random_cloud


def min_pairwise(points: np.ndarray) -> float:
    if len(points) < 2:
        return np.inf
    delta = points[:, None, :] - points[None, :, :]
    dist = np.linalg.norm(delta, axis=2)
    return dist[~np.eye(len(points), dtype=bool)].min()


def test_spacing_property_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(20):
        pts = rng.uniform(0, 1, size=(int(rng.integers(2, 300)), 3))
        radius = float(rng.uniform(0.05, 0.4))
        keep = poisson_disk_indices(pts, radius, seed=trial)
        assert min_pairwise(pts[keep]) >= radius


def test_rejected_points_have_a_kept_neighbor():
    # maximality: every dropped point must sit within radius of a kept one
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 1, size=(500, 3))
    radius = 0.2
    keep = poisson_disk_indices(pts, radius, seed=0)
    kept = pts[keep]
    dropped = np.delete(pts, keep, axis=0)
    dist = np.linalg.norm(dropped[:, None, :] - kept[None, :, :], axis=2)
    assert (dist.min(axis=1) < radius).all()


def test_deterministic_given_seed():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 1, size=(400, 3))
    a = poisson_disk_indices(pts, 0.1, seed=7)
    b = poisson_disk_indices(pts, 0.1, seed=7)
    assert np.array_equal(a, b)
    c = poisson_disk_indices(pts, 0.1, seed=8)
    assert not np.array_equal(a, c)


def test_subsample_carries_fields():
    rng = np.random.default_rng(3)
    cloud = random_cloud(rng, 200, normals=True)
    cloud = cloud.with_labels(np.arange(200) % 3, np.arange(200) % 5)
    out = poisson_disk_subsample(cloud, 0.3, seed=0)
    assert 0 < len(out) < 200
    assert out.has_normals and out.has_labels
    with pytest.raises(ValueError, match="radius"):
        poisson_disk_subsample(cloud, 0.0)


def test_hierarchy_levels(box_cloud):
    hier = build_hierarchy(box_cloud, seed=0)
    assert len(hier.levels) == len(HIERARCHY_SPACINGS)
    sizes = [len(level) for level in hier.levels]
    assert sizes == sorted(sizes, reverse=True)
    for spacing, level in zip(HIERARCHY_SPACINGS, hier.levels):
        assert min_pairwise(level.points[:200]) >= spacing
    assert hier.coarsest is hier.levels[-1]


def test_hierarchy_requires_normals():
    with pytest.raises(ValueError, match="normals required"):
        build_hierarchy(PointCloud(np.zeros((5, 3))))


def test_hierarchy_deterministic(box_cloud):
    a = build_hierarchy(box_cloud, seed=4)
    b = build_hierarchy(box_cloud, seed=4)
    for la, lb in zip(a.levels, b.levels):
        assert np.array_equal(la.points, lb.points)
