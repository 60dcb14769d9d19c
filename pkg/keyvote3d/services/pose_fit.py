# keyvote3d/services/pose_fit.py
"""Confidence-weighted rigid fitting of model keypoints to voted scene keypoints, plus ICP."""
import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.spatial import cKDTree

from keyvote3d.constants import ICP_MIN_ROTATION, ICP_MIN_TRANSLATION, RANK_TOL
from keyvote3d.errors import (
    AllZeroConfidence,
    DegenerateCorrespondences,
    NoCorrespondences,
    PoseFitError,
    ShapeMismatch,
)
from keyvote3d.models.geometry import Correspondences, KeypointEstimate, ModelKeypoints, PointCloud, RigidTransform
from keyvote3d.services.geometry import compose

logger = logging.getLogger(__name__)


def weighted_rigid_fit(c: Correspondences) -> RigidTransform:
    """argmin_{R,t} sum_k w_k |R m_k + t - s_k|^2 via SVD with reflection guard."""
    keep = c.weights > 0  # zero-weight rows contribute nothing; drop them exactly
    w = c.weights[keep] / c.weights[keep].sum()
    m = c.model_points[keep]
    s = c.scene_points[keep]

    m_mean = w @ m
    s_mean = w @ s
    m_centered = m - m_mean
    s_centered = s - s_mean

    # Collinear (or coincident) model points leave the rotation about their line free
    spread = np.linalg.svd(m_centered * np.sqrt(w)[:, None], compute_uv=False)
    if spread[0] <= 0.0 or spread[1] <= RANK_TOL * spread[0]:
        raise DegenerateCorrespondences("weighted model points are collinear")

    cross_cov = (s_centered * w[:, None]).T @ m_centered  # Σ w s mᵀ, 3x3
    u, _, vt = np.linalg.svd(cross_cov)
    d = np.sign(np.linalg.det(u @ vt)) or 1.0
    rotation = u @ np.diag([1.0, 1.0, d]) @ vt
    return RigidTransform(rotation=rotation, translation=s_mean - rotation @ m_mean)


def fit_from_votes(estimates: List[KeypointEstimate], model_kp: ModelKeypoints) -> RigidTransform:
    """Weighted fit with the raw vote counts as weights."""
    if len(estimates) != model_kp.k:
        raise ShapeMismatch(f"{len(estimates)} estimates for {model_kp.k} model keypoints")
    weights = np.array([e.confidence for e in estimates], dtype=np.float64)
    if not np.any(weights > 0):
        raise AllZeroConfidence("every keypoint estimate has zero confidence")
    c = Correspondences(
        model_points=model_kp.keypoints,
        scene_points=np.stack([e.position for e in estimates]),
        weights=weights,
    )
    return weighted_rigid_fit(c)


@dataclass(frozen=True)
class IcpResult:
    pose: RigidTransform
    objective: float  # mean squared matched distance at `pose`, m^2
    initial_objective: float
    iterations: int
    converged: bool
    no_correspondences: bool = False


def _match(tree: cKDTree, moved: np.ndarray, max_corr_dist: float):
    """Nearest scene point for each moved model point within max_corr_dist."""
    dist, idx = tree.query(moved, k=1, distance_upper_bound=max_corr_dist)
    found = np.isfinite(dist)
    if not np.any(found):
        raise NoCorrespondences(f"no scene point within {max_corr_dist} m of the model")
    return found, idx[found], float(np.mean(dist[found] ** 2))


def icp_refine(
    initial: RigidTransform,
    scene: PointCloud,
    model: PointCloud,
    iters: int,
    max_corr_dist: float,
) -> IcpResult:
    """Point-to-point ICP from `initial`; a step is kept only if the objective does not grow."""
    if scene.count == 0 or model.count == 0:
        raise ValueError("ICP needs non-empty scene and model clouds")
    if iters < 1:
        raise ValueError("iters must be positive")

    tree = cKDTree(scene.points)
    pose = initial
    try:
        found, idx, objective = _match(tree, pose.apply(model.points), max_corr_dist)
    except NoCorrespondences as e:
        logger.warning(f"⚠️ ICP skipped: {e}")
        return IcpResult(pose=initial, objective=float("inf"), initial_objective=float("inf"),
                         iterations=0, converged=False, no_correspondences=True)

    initial_objective = objective
    converged = False
    no_correspondences = False
    iteration = 0
    for iteration in range(1, iters + 1):
        ones = np.ones(int(found.sum()))
        try:
            step = weighted_rigid_fit(Correspondences(
                model_points=pose.apply(model.points[found]),
                scene_points=scene.points[idx],
                weights=ones,
            ))
        except PoseFitError as e:
            logger.debug(f"   → ICP stopped at iteration {iteration}: {e}")
            break

        candidate = compose(step, pose)
        try:
            cand_found, cand_idx, cand_objective = _match(tree, candidate.apply(model.points), max_corr_dist)
        except NoCorrespondences as e:
            logger.warning(f"⚠️ ICP lost all correspondences at iteration {iteration}: {e}")
            no_correspondences = True
            break
        if cand_objective > objective:
            logger.debug(f"   → ICP step {iteration} rejected ({cand_objective:.3e} > {objective:.3e})")
            break

        pose, found, idx, objective = candidate, cand_found, cand_idx, cand_objective
        if np.linalg.norm(step.translation) < ICP_MIN_TRANSLATION and step.rotation_angle() < ICP_MIN_ROTATION:
            converged = True
            break

    logger.debug(f"ICP: objective {initial_objective:.3e} → {objective:.3e} after {iteration} iterations")
    return IcpResult(pose=pose, objective=objective, initial_objective=initial_objective,
                     iterations=iteration, converged=converged, no_correspondences=no_correspondences)


def rotation_error_deg(gt: RigidTransform, pred: RigidTransform) -> float:
    """Geodesic angle between the two rotations, degrees."""
    cos_angle = (np.trace(pred.rotation @ gt.rotation.T) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(cos_angle, -1.0, 1.0))))


def translation_error(gt: RigidTransform, pred: RigidTransform) -> float:
    return float(np.linalg.norm(pred.translation - gt.translation))
