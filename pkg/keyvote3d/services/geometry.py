# keyvote3d/services/geometry.py
"""Rigid transforms, farthest point sampling, diameters and subsampling."""
import logging

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import cdist, pdist

from keyvote3d.constants import DIAMETER_HULL_MIN_POINTS, ORTHO_SNAP_TOL, PAIRWISE_BLOCK_ELEMENTS
from keyvote3d.errors import DegenerateGeometry, InsufficientPoints
from keyvote3d.models.geometry import ModelKeypoints, PointCloud, RigidTransform
from keyvote3d.models.schemas import FpsSeedRule
from keyvote3d.utils.rng import STREAM_SUBSAMPLE, generator

logger = logging.getLogger(__name__)


def apply_transform(t: RigidTransform, c: PointCloud) -> PointCloud:
    return PointCloud(points=t.apply(c.points))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """The transform that applies `b` first, then `a`.

    Accumulated round-off in the product is projected back onto SO(3).
    """
    rotation = a.rotation @ b.rotation
    if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > ORTHO_SNAP_TOL:
        u, _, vt = np.linalg.svd(rotation)
        rotation = u @ vt
    return RigidTransform(
        rotation=rotation,
        translation=a.rotation @ b.translation + a.translation,
    )


def inverse(t: RigidTransform) -> RigidTransform:
    return t.inverse()


def model_centroid(model: PointCloud) -> np.ndarray:
    if model.count == 0:
        raise InsufficientPoints("centroid of an empty cloud")
    return model.points.mean(axis=0)


def min_pairwise_distance(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 2:
        return float("inf")
    return float(pdist(pts).min())


def max_pairwise_distance(points: np.ndarray) -> float:
    """Largest distance between any two rows, evaluated in bounded row blocks."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    rows = max(1, PAIRWISE_BLOCK_ELEMENTS // max(n, 1))
    best = 0.0
    for start in range(0, n - 1, rows):
        best = max(best, float(cdist(pts[start:start + rows], pts[start + 1:]).max()))
    return best


def fps_indices(points: np.ndarray, k: int, seed_rule: FpsSeedRule = FpsSeedRule.FARTHEST_FROM_CENTROID) -> np.ndarray:
    """Greedy farthest point sampling; ties go to the lowest input index."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k < 1:
        raise ValueError("k must be positive")
    if n < k:
        raise InsufficientPoints(f"farthest point sampling of {k} points from a cloud of {n}")

    if FpsSeedRule(seed_rule) is FpsSeedRule.INDEX_0:
        first = 0
    else:
        first = int(np.argmax(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))

    selected = [first]
    min_dist = np.linalg.norm(pts - pts[first], axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(min_dist))
        if min_dist[nxt] <= 0.0:
            raise DegenerateGeometry(f"cloud has fewer than {k} distinct points")
        selected.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(pts - pts[nxt], axis=1))
    return np.asarray(selected, dtype=np.intp)


def fps_keypoints(model: PointCloud, k: int, seed_rule: FpsSeedRule = FpsSeedRule.FARTHEST_FROM_CENTROID) -> ModelKeypoints:
    idx = fps_indices(model.points, k, seed_rule)
    logger.debug(f"FPS selected indices {idx.tolist()} from {model.count} points")
    return ModelKeypoints(keypoints=model.points[idx])


def model_diameter(model: PointCloud) -> float:
    """Maximum pairwise distance between model points, in meters."""
    if model.count < 2:
        raise InsufficientPoints("diameter needs at least 2 points")
    pts = model.points
    if model.count > DIAMETER_HULL_MIN_POINTS:
        # The farthest pair always lies on the convex hull
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            logger.debug("convex hull failed (flat or degenerate cloud), using all points")
    return max_pairwise_distance(pts)


def subsample_indices(count: int, n: int, rng_seed: int) -> np.ndarray:
    """Indices of `n` draws from `count` items, deterministic per seed.

    Without replacement when count >= n. Otherwise every item appears once
    (in random order) and the remainder is drawn with replacement.
    """
    if count < 1:
        raise InsufficientPoints("cannot subsample an empty cloud")
    if n < 1:
        raise ValueError("n must be positive")
    rng = generator(rng_seed, STREAM_SUBSAMPLE)
    if count >= n:
        return rng.choice(count, size=n, replace=False)
    extra = rng.integers(0, count, size=n - count)
    return np.concatenate([rng.permutation(count), extra])


def subsample(c: PointCloud, n: int, rng_seed: int) -> PointCloud:
    if c.count < n:
        logger.warning(f"⚠️ only {c.count} points available for {n} samples, drawing with replacement")
    return c.take(subsample_indices(c.count, n, rng_seed))
