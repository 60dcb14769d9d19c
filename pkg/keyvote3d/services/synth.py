# keyvote3d/services/synth.py
"""Synthetic scenes standing in for a trained direction-vector predictor.

A scene is the model under a random pose, cut by a half-space occluder,
subsampled to n_points, with exact vectors toward the posed keypoints that
are then corrupted by angular noise and uniform outliers.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from keyvote3d.constants import (
    COINCIDENT_TOL,
    DEFAULT_DEPTH_OFFSET,
    DEFAULT_DIAMETER_FRACTION,
    DEFAULT_MAX_CORR_DIST,
    DEFAULT_MAX_SMALL_ANGLE_DEG,
    DEFAULT_REFINE_ITERS,
    DEFAULT_TRANSLATION_HALF_EXTENT,
)
from keyvote3d.errors import DegenerateScene, KeyvoteError
from keyvote3d.models.geometry import ModelKeypoints, PointCloud, RigidTransform, VoteField
from keyvote3d.models.schemas import BenchmarkRow, FpsSeedRule, PoseSampling, SynthConfig, VotingConfig
from keyvote3d.services.geometry import fps_keypoints, model_centroid, model_diameter, subsample_indices
from keyvote3d.services.metrics import add_metric, adds_metric
from keyvote3d.services.pose_fit import fit_from_votes, icp_refine
from keyvote3d.services.vote_field import ground_truth_vectors, perturb
from keyvote3d.services.voting import vote_all_keypoints
from keyvote3d.utils.rng import STREAM_MODEL, STREAM_OCCLUSION, STREAM_POSE, STREAM_TRIAL, derive_seed, generator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthScene:
    gt_pose: RigidTransform
    scene_points: PointCloud
    field: VoteField
    model_kp: ModelKeypoints


def _uniform_rotations(rng: np.random.Generator, count: int) -> np.ndarray:
    # Normalized 4D Gaussian -> uniform unit quaternion -> uniform on SO(3)
    quats = rng.standard_normal((count, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return Rotation.from_quat(quats).as_matrix()


def _small_angle_rotations(rng: np.random.Generator, count: int, max_angle_deg: float) -> np.ndarray:
    axes = rng.standard_normal((count, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = np.radians(rng.uniform(0.0, max_angle_deg, size=count))
    return Rotation.from_rotvec(axes * angles[:, None]).as_matrix()


def _draw_rotations(rng: np.random.Generator, kind: PoseSampling, count: int, max_small_angle_deg: float) -> np.ndarray:
    if PoseSampling(kind) is PoseSampling.UNIFORM_ROTATION:
        return _uniform_rotations(rng, count)
    return _small_angle_rotations(rng, count, max_small_angle_deg)


def sample_rotations(kind: PoseSampling, count: int, rng_seed: int,
                     max_small_angle_deg: float = DEFAULT_MAX_SMALL_ANGLE_DEG) -> np.ndarray:
    """(count, 3, 3) rotation matrices, deterministic per seed."""
    return _draw_rotations(generator(rng_seed, STREAM_POSE), kind, count, max_small_angle_deg)


def sample_pose(kind: PoseSampling, rng_seed: int,
                translation_half_extent: float = DEFAULT_TRANSLATION_HALF_EXTENT,
                depth_offset: float = DEFAULT_DEPTH_OFFSET,
                max_small_angle_deg: float = DEFAULT_MAX_SMALL_ANGLE_DEG) -> RigidTransform:
    """Random pose: rotation per `kind`, translation uniform in a box pushed `depth_offset` along +z."""
    rng = generator(rng_seed, STREAM_POSE)
    rotation = _draw_rotations(rng, kind, 1, max_small_angle_deg)[0]
    translation = rng.uniform(-translation_half_extent, translation_half_extent, size=3)
    translation[2] += depth_offset
    return RigidTransform(rotation=rotation, translation=translation)


def sample_box_surface(count: int, extents=(0.10, 0.06, 0.04), rng_seed: int = 0) -> PointCloud:
    """`count` points uniform on the surface of a centered box, extents in meters."""
    ext = np.asarray(extents, dtype=np.float64)
    if count < 1 or ext.shape != (3,) or np.any(ext <= 0):
        raise ValueError("need count >= 1 and three positive extents")
    rng = generator(rng_seed, STREAM_MODEL, count)
    areas = np.array([ext[1] * ext[2], ext[0] * ext[2], ext[0] * ext[1]])
    axis = rng.choice(3, size=count, p=areas / areas.sum())
    points = (rng.random((count, 3)) - 0.5) * ext
    side = np.where(rng.random(count) < 0.5, -0.5, 0.5)
    points[np.arange(count), axis] = side * ext[axis]
    return PointCloud(points=points)


def model_keypoints_with_center(model: PointCloud, k_keypoints: int,
                               seed_rule: FpsSeedRule = FpsSeedRule.FARTHEST_FROM_CENTROID) -> ModelKeypoints:
    """k_keypoints - 1 FPS keypoints followed by the model centroid."""
    center = model_centroid(model)[None, :]
    if k_keypoints == 1:
        return ModelKeypoints(keypoints=center)
    surface = fps_keypoints(model, k_keypoints - 1, seed_rule).keypoints
    return ModelKeypoints(keypoints=np.vstack([surface, center]))


def _visible_mask(points: np.ndarray, occlusion_fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Drop the occlusion_fraction of points lying farthest along a random direction."""
    visible = np.ones(points.shape[0], dtype=bool)
    n_hidden = int(round(occlusion_fraction * points.shape[0]))
    if n_hidden == 0:
        return visible
    normal = rng.standard_normal(3)
    normal /= np.linalg.norm(normal)
    order = np.argsort(-(points @ normal), kind="stable")
    visible[order[:n_hidden]] = False
    return visible


def generate(model: PointCloud, cfg: SynthConfig, model_kp: Optional[ModelKeypoints] = None) -> SynthScene:
    """Synthetic scene for `cfg`; pass `model_kp` to reuse keypoints across calls."""
    if model_kp is None:
        model_kp = model_keypoints_with_center(model, cfg.k_keypoints)
    elif model_kp.k != cfg.k_keypoints:
        raise ValueError(f"model_kp has {model_kp.k} keypoints, config asks for {cfg.k_keypoints}")

    gt_pose = sample_pose(cfg.pose_sampling, cfg.rng_seed, cfg.translation_half_extent,
                          cfg.depth_offset, cfg.max_small_angle_deg)
    posed = gt_pose.apply(model.points)
    posed_kp = ModelKeypoints(keypoints=gt_pose.apply(model_kp.keypoints))

    visible = _visible_mask(posed, cfg.occlusion_fraction, generator(cfg.rng_seed, STREAM_OCCLUSION))
    # Vectors are undefined at the keypoints themselves (FPS keypoints are model points)
    kp_dist = np.linalg.norm(posed[:, None, :] - posed_kp.keypoints[None, :, :], axis=2).min(axis=1)
    visible &= kp_dist > COINCIDENT_TOL

    candidates = np.flatnonzero(visible)
    if candidates.size < 3:
        raise DegenerateScene(f"only {candidates.size} scene points survive occlusion")

    chosen = candidates[subsample_indices(candidates.size, cfg.n_points, cfg.rng_seed)]
    scene_points = PointCloud(points=posed[chosen])
    exact = ground_truth_vectors(scene_points, posed_kp)
    field = perturb(exact, cfg.angular_noise_deg, cfg.outlier_fraction, cfg.rng_seed)
    return SynthScene(gt_pose=gt_pose, scene_points=scene_points, field=field, model_kp=model_kp)


@dataclass(frozen=True)
class _TrialOutcome:
    add: Optional[float]  # None when the trial failed
    runtime: float
    error: Optional[str] = None


def _run_trial(model: PointCloud, model_kp: ModelKeypoints, cfg: SynthConfig, voting: VotingConfig,
               refine: bool, refine_iters: int, max_corr_dist: float, symmetric: bool) -> _TrialOutcome:
    try:
        scene = generate(model, cfg, model_kp)
        started = time.perf_counter()
        estimates = vote_all_keypoints(scene.field, voting.model_copy(update={"rng_seed": cfg.rng_seed}))
        pose = fit_from_votes(estimates, model_kp)
        if refine:
            pose = icp_refine(pose, scene.scene_points, model, refine_iters, max_corr_dist).pose
        runtime = time.perf_counter() - started
    except KeyvoteError as e:
        return _TrialOutcome(add=None, runtime=0.0, error=f"{type(e).__name__}: {e}")
    metric = adds_metric if symmetric else add_metric
    return _TrialOutcome(add=metric(model, scene.gt_pose, pose), runtime=runtime)


def benchmark_sweep(
    model: PointCloud,
    grid: Sequence[SynthConfig],
    trials: int,
    voting: Optional[VotingConfig] = None,
    diameter_fraction: float = DEFAULT_DIAMETER_FRACTION,
    refine: bool = False,
    refine_iters: int = DEFAULT_REFINE_ITERS,
    max_corr_dist: float = DEFAULT_MAX_CORR_DIST,
    symmetric: bool = False,
    threads: Optional[int] = None,
) -> List[BenchmarkRow]:
    """Run generate → vote → fit (→ ICP) → ADD for `trials` seeds per grid cell.

    Trial t of a cell uses the seed derived from (cell rng_seed, t), so serial
    and threaded runs give identical rows apart from runtimes. Failed trials
    count as misses.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    voting = voting or VotingConfig()
    threshold = diameter_fraction * model_diameter(model)
    keypoint_cache = {}
    rows: List[BenchmarkRow] = []

    for cell_index, cell in enumerate(grid):
        if cell.k_keypoints not in keypoint_cache:
            keypoint_cache[cell.k_keypoints] = model_keypoints_with_center(model, cell.k_keypoints)
        model_kp = keypoint_cache[cell.k_keypoints]
        trial_cfgs = [
            cell.model_copy(update={"rng_seed": derive_seed(cell.rng_seed, STREAM_TRIAL, t)})
            for t in range(trials)
        ]

        def _trial(trial_cfg: SynthConfig) -> _TrialOutcome:
            return _run_trial(model, model_kp, trial_cfg, voting, refine, refine_iters, max_corr_dist, symmetric)

        if threads is not None and threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(_trial, trial_cfgs))
        else:
            outcomes = [_trial(c) for c in trial_cfgs]

        done = [o for o in outcomes if o.add is not None]
        failures = len(outcomes) - len(done)
        passed = sum(1 for o in done if o.add < threshold)
        row = BenchmarkRow(
            config=cell,
            trials=trials,
            failures=failures,
            accuracy=passed / trials,
            mean_add=float(np.mean([o.add for o in done])) if done else math.nan,
            mean_runtime=float(np.mean([o.runtime for o in done])) if done else math.nan,
        )
        rows.append(row)

        logger.info(f"🎯 cell {cell_index + 1}/{len(grid)}: accuracy {row.accuracy:.3f}, "
                    f"mean ADD {row.mean_add:.4g} m, {failures} failures")
        for o in outcomes:
            if o.error:
                logger.debug(f"   → failed trial: {o.error}")
    return rows


def centroid_baseline_accuracy(
    model: PointCloud,
    cell: SynthConfig,
    trials: int,
    diameter_fraction: float = DEFAULT_DIAMETER_FRACTION,
) -> float:
    """Accuracy without voting: identity rotation placed at the visible scene centroid.

    Uses the same per-trial seeds as benchmark_sweep, so it scores the very
    scenes a sweep row over `cell` sees.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    threshold = diameter_fraction * model_diameter(model)
    center = model_centroid(model)
    passed = 0
    for t in range(trials):
        scene = generate(model, cell.model_copy(update={"rng_seed": derive_seed(cell.rng_seed, STREAM_TRIAL, t)}))
        guess = RigidTransform(rotation=np.eye(3), translation=scene.scene_points.points.mean(axis=0) - center)
        passed += add_metric(model, scene.gt_pose, guess) < threshold
    return passed / trials
