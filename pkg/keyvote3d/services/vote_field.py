# keyvote3d/services/vote_field.py
"""Ground-truth direction vectors, the smooth-L1 field loss and synthetic corruption.

Vectors point FROM each scene point TOWARD the keypoint, (x_k - p) / |x_k - p|,
which is the orientation the cosine inlier test in voting expects.
"""
import logging

import numpy as np

from keyvote3d.constants import COINCIDENT_TOL
from keyvote3d.errors import DegenerateGeometry, ShapeMismatch
from keyvote3d.models.geometry import ModelKeypoints, PointCloud, VoteField
from keyvote3d.utils.rng import STREAM_PERTURB, generator

logger = logging.getLogger(__name__)


def ground_truth_vectors(scene_points: PointCloud, keypoints_scene: ModelKeypoints) -> VoteField:
    offsets = keypoints_scene.keypoints[None, :, :] - scene_points.points[:, None, :]  # (N, K, 3)
    dist = np.linalg.norm(offsets, axis=2)
    if dist.size and dist.min() <= COINCIDENT_TOL:
        p, k = np.unravel_index(int(np.argmin(dist)), dist.shape)
        raise DegenerateGeometry(f"scene point {p} coincides with keypoint {k}")
    return VoteField(scene_points=scene_points, vectors=offsets / dist[:, :, None])


def smooth_l1_array(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def smooth_l1(x: float) -> float:
    return float(smooth_l1_array(np.asarray(x, dtype=np.float64)))


def vote_field_loss(predicted: VoteField, ground_truth: VoteField) -> float:
    """Sum over keypoints, points and axes of smooth_l1(predicted - ground_truth)."""
    if predicted.vectors.shape != ground_truth.vectors.shape:
        raise ShapeMismatch(
            f"fields differ in shape: {predicted.vectors.shape} vs {ground_truth.vectors.shape}"
        )
    if predicted.n and np.max(np.abs(predicted.scene_points.points - ground_truth.scene_points.points)) > 1e-12:
        raise ShapeMismatch("fields are defined on different scene points")
    return float(smooth_l1_array(predicted.vectors - ground_truth.vectors).sum())


def angular_deviation_deg(a: VoteField, b: VoteField) -> np.ndarray:
    """Per-cell angle in degrees between two fields of equal shape, (N, K)."""
    if a.vectors.shape != b.vectors.shape:
        raise ShapeMismatch("fields differ in shape")
    cos = np.einsum("nkd,nkd->nk", a.vectors, b.vectors)
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def _random_unit_vectors(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    v = rng.standard_normal(shape + (3,))
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    # A zero Gaussian draw has probability zero; keep the math total anyway
    v = np.where(norm > 0, v / np.where(norm > 0, norm, 1.0), np.array([1.0, 0.0, 0.0]))
    return v


def _orthogonal_axes(rng: np.random.Generator, vectors: np.ndarray) -> np.ndarray:
    """Uniform random unit axes orthogonal to each input unit vector."""
    g = rng.standard_normal(vectors.shape)
    g -= np.sum(g * vectors, axis=-1, keepdims=True) * vectors
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    bad = norm[..., 0] < 1e-12
    if np.any(bad):
        # Fall back to any fixed perpendicular direction
        ref = np.where(np.abs(vectors[bad][:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
        alt = np.cross(vectors[bad], ref)
        g[bad] = alt
        norm[bad] = np.linalg.norm(alt, axis=-1, keepdims=True)
    return g / norm


def perturb(field: VoteField, angular_noise_deg: float, outlier_fraction: float, rng_seed: int) -> VoteField:
    """Rotate each vector by a half-normal angle and replace a fraction with uniform outliers."""
    if angular_noise_deg < 0:
        raise ValueError("angular_noise_deg must be non-negative")
    if not 0.0 <= outlier_fraction <= 1.0:
        raise ValueError("outlier_fraction must be in [0, 1]")
    if angular_noise_deg == 0 and outlier_fraction == 0:
        return field

    rng = generator(rng_seed, STREAM_PERTURB)
    vectors = np.array(field.vectors)
    cells = vectors.shape[:2]

    if angular_noise_deg > 0:
        angle = np.radians(np.abs(rng.normal(0.0, angular_noise_deg, size=cells)))[..., None]
        axis = _orthogonal_axes(rng, vectors)
        # Rodrigues with axis ⟂ v: v cos(a) + (axis × v) sin(a)
        vectors = vectors * np.cos(angle) + np.cross(axis, vectors) * np.sin(angle)

    if outlier_fraction > 0:
        outliers = rng.random(cells) < outlier_fraction
        vectors[outliers] = _random_unit_vectors(rng, (int(outliers.sum()),))
        logger.debug(f"replaced {int(outliers.sum())}/{outliers.size} cells with outliers")

    vectors /= np.linalg.norm(vectors, axis=2, keepdims=True)
    return VoteField(scene_points=field.scene_points, vectors=vectors)
