import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from keyvote3d.models.geometry import PointCloud, RigidTransform
from keyvote3d.services.synth import sample_box_surface


def random_transform(rng: np.random.Generator, max_translation: float = 1.0) -> RigidTransform:
    return RigidTransform(
        rotation=Rotation.random(random_state=rng).as_matrix(),
        translation=rng.uniform(-max_translation, max_translation, size=3),
    )


def rotation_residual(r: np.ndarray) -> float:
    return float(np.max(np.abs(r.T @ r - np.eye(3))))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def box_model() -> PointCloud:
    """10 x 6 x 4 cm box surface, 2000 points."""
    return sample_box_surface(2000, rng_seed=7)


@pytest.fixture(scope="session")
def small_box_model() -> PointCloud:
    return sample_box_surface(400, rng_seed=3)


@pytest.fixture(scope="session")
def grid_model() -> PointCloud:
    """5 x 6 x 7 lattice with 2 cm spacing."""
    axes = [np.arange(n) * 0.02 for n in (5, 6, 7)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return PointCloud(points=pts - pts.mean(axis=0))
