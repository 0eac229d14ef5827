import numpy as np
import pytest

from scenetrack.cloud import PointCloud
from scenetrack.synth import Prototype, sample_prototype


def unit_normals(raw: np.ndarray) -> np.ndarray:
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def random_cloud(rng: np.random.Generator, n: int, scale: float = 1.0,
                 normals: bool = False) -> PointCloud:
    pts = rng.uniform(-scale, scale, size=(n, 3))
    nrm = unit_normals(rng.normal(size=(n, 3))) if normals else None
    return PointCloud(pts, nrm)


@pytest.fixture
def box_proto() -> Prototype:
    return Prototype(kind="box", dims=(0.4, 0.3, 0.5), semantic_class=2)


@pytest.fixture
def box_cloud(box_proto) -> PointCloud:
    return sample_prototype(box_proto, spacing=0.02)
