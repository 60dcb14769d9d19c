# keyvote3d/services/voting.py
"""RANSAC triangulation of 3D keypoints from a vote field.

Each hypothesis is the least-squares closest point to three rays
{p_i + t v_i}; every scene point then votes for it when its predicted
direction agrees with the direction to the hypothesis within the cosine
threshold theta. The hypothesis with the most votes wins.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from keyvote3d.constants import COSINE_EPS, MAX_CONDITION_NUMBER, SCORE_MIN_DIST
from keyvote3d.errors import AllHypothesesDegenerate, DegenerateLines, InsufficientPoints, VotingError
from keyvote3d.models.geometry import KeypointEstimate, VoteField
from keyvote3d.models.schemas import VotingConfig
from keyvote3d.utils.rng import STREAM_VOTING, generator

logger = logging.getLogger(__name__)


def _normal_equations(points: np.ndarray, directions: np.ndarray):
    """A = sum(I - v vᵀ), b = sum((I - v vᵀ) p) over the last-but-one axis.

    points/directions: (..., L, 3). Returns A (..., 3, 3) and b (..., 3).
    """
    projectors = np.eye(3) - directions[..., :, None] * directions[..., None, :]  # (..., L, 3, 3)
    a = projectors.sum(axis=-3)
    b = np.einsum("...lij,...lj->...i", projectors, points)
    return a, b


def closest_point_to_lines(points: Sequence, directions: Sequence) -> np.ndarray:
    """Least-squares point closest to the lines p_i + t v_i."""
    p = np.asarray(points, dtype=np.float64)
    v = np.asarray(directions, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3 or p.shape != v.shape:
        raise ValueError("points and directions must both have shape (L, 3)")
    if p.shape[0] < 2:
        raise ValueError("need at least two lines")
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    a, b = _normal_equations(p, v)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > MAX_CONDITION_NUMBER:
        raise DegenerateLines(f"lines are near-parallel (condition number {cond:.3g})")
    return np.linalg.solve(a, b)


def _score_hypotheses(hypotheses: np.ndarray, points: np.ndarray, vectors: np.ndarray, theta: float) -> np.ndarray:
    """Vote counts for each hypothesis, (H,), given points (N, 3) and vectors (N, 3)."""
    # per-axis (H, N) planes; summed x, y, z in order like a dot product
    ox, oy, oz = (hypotheses[:, None, axis] - points[None, :, axis] for axis in range(3))
    dist = np.sqrt(ox * ox + oy * oy + oz * oz)
    dots = ox * vectors[:, 0] + oy * vectors[:, 1] + oz * vectors[:, 2]
    valid = dist >= SCORE_MIN_DIST
    cos = np.divide(dots, dist, out=np.full_like(dots, -np.inf), where=valid)
    return np.count_nonzero(cos >= theta - COSINE_EPS, axis=1)


def _condition_numbers(a: np.ndarray) -> np.ndarray:
    """2-norm condition numbers of symmetric positive semi-definite (..., 3, 3) matrices."""
    eig = np.linalg.eigvalsh(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = eig[..., -1] / eig[..., 0]
    return np.where(eig[..., 0] > 0.0, cond, np.inf)


def score_hypothesis(h, field: VoteField, keypoint_index: int, theta: float) -> int:
    """Number of scene points whose vote for keypoint `keypoint_index` agrees with h."""
    if not 0 <= keypoint_index < field.k:
        raise IndexError(f"keypoint_index {keypoint_index} outside [0, {field.k})")
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must be in (0, 1]")
    hyp = np.asarray(h, dtype=np.float64).reshape(1, 3)
    counts = _score_hypotheses(hyp, field.scene_points.points, field.keypoint_vectors(keypoint_index), theta)
    return int(counts[0])


def draw_triplets(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    """(m, 3) rows of distinct indices in [0, n), uniform over ordered triplets.

    The uniforms are consumed row by row, so row i depends only on the
    generator state and i: the first m rows of a larger draw are identical.
    """
    u = rng.random((m, 3))
    first = np.minimum((u[:, 0] * n).astype(np.int64), n - 1)
    second = np.minimum((u[:, 1] * (n - 1)).astype(np.int64), n - 2)
    second += second >= first
    third = np.minimum((u[:, 2] * (n - 2)).astype(np.int64), n - 3)
    lo = np.minimum(first, second)
    hi = np.maximum(first, second)
    third += third >= lo
    third += third >= hi
    return np.stack([first, second, third], axis=1)


def vote_keypoint(field: VoteField, keypoint_index: int, cfg: VotingConfig) -> KeypointEstimate:
    """Best of M triplet hypotheses for one keypoint.

    Triplet i is a function of (rng_seed, keypoint_index, i) only: results do
    not depend on which keypoints run concurrently, and the first M triplets
    are shared by every larger M. Degenerate triplets are skipped; ties go to
    the lowest iteration index.
    """
    n = field.n
    if n < 3:
        raise InsufficientPoints(f"voting needs at least 3 scene points, got {n}")
    if not 0 <= keypoint_index < field.k:
        raise IndexError(f"keypoint_index {keypoint_index} outside [0, {field.k})")

    points = field.scene_points.points
    vectors = field.keypoint_vectors(keypoint_index)
    triplets = draw_triplets(generator(cfg.rng_seed, STREAM_VOTING, keypoint_index), n, cfg.m_hypotheses)

    a, b = _normal_equations(points[triplets], vectors[triplets])  # (M, 3, 3), (M, 3)
    cond = _condition_numbers(a)
    ok = np.isfinite(cond) & (cond <= MAX_CONDITION_NUMBER)
    if not np.any(ok):
        raise AllHypothesesDegenerate(
            f"all {cfg.m_hypotheses} triplets were degenerate", keypoint_index=keypoint_index
        )

    hypotheses = np.linalg.solve(a[ok], b[ok][..., None])[..., 0]
    counts = _score_hypotheses(hypotheses, points, vectors, cfg.theta)
    best = int(np.argmax(counts))  # first maximum = lowest iteration index

    skipped = int(cfg.m_hypotheses - ok.sum())
    if skipped:
        logger.debug(f"   → keypoint {keypoint_index}: skipped {skipped} degenerate triplets")
    return KeypointEstimate(position=hypotheses[best], confidence=int(counts[best]))


def vote_all_keypoints(field: VoteField, cfg: VotingConfig, threads: Optional[int] = None) -> List[KeypointEstimate]:
    """vote_keypoint for every keypoint column; errors are tagged with the keypoint index."""

    def _one(k: int) -> KeypointEstimate:
        try:
            return vote_keypoint(field, k, cfg)
        except VotingError as e:
            if e.keypoint_index is not None:
                raise
            raise type(e)(f"keypoint {k}: {e}", keypoint_index=k) from e
        except InsufficientPoints as e:
            raise InsufficientPoints(f"keypoint {k}: {e}") from e

    if threads is not None and threads > 1 and field.k > 1:
        with ThreadPoolExecutor(max_workers=min(threads, field.k)) as pool:
            estimates = list(pool.map(_one, range(field.k)))
    else:
        estimates = [_one(k) for k in range(field.k)]

    logger.debug(f"keypoint confidences: {[e.confidence for e in estimates]} of {field.n}")
    return estimates
