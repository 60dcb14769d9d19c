# keyvote3d/commands/pipeline.py
"""End-to-end pose estimation from an externally predicted vote field."""
import argparse
import logging
import time
from typing import Optional

from keyvote3d import constants as C
from keyvote3d.commands import (
    EXIT_FAILURE,
    EXIT_OK,
    common_parent,
    guarded,
    method_default,
    positive_int,
    repo_default,
    verify_artifact,
)
from keyvote3d.config import resolve_threads
from keyvote3d.errors import IngestError, ShapeMismatch
from keyvote3d.models.geometry import PointCloud
from keyvote3d.models.schemas import PipelineConfig
from keyvote3d.services.camera import DEPTH_UNITS, backproject, load_depth, load_intrinsics, load_mask
from keyvote3d.services.geometry import subsample_indices
from keyvote3d.services.ply import load_ply
from keyvote3d.services.pose_fit import fit_from_votes, icp_refine
from keyvote3d.services.serialization import load_keypoints, load_pose, load_vote_field, save_pose
from keyvote3d.services.voting import vote_all_keypoints

logger = logging.getLogger(__name__)

# argparse dest -> PipelineConfig field
_FLAG_FIELDS = {
    "theta": "theta",
    "hypotheses": "m_hypotheses",
    "n_points": "n_points",
    "refine": "refine",
    "refine_iters": "refine_iters",
    "max_corr_dist": "max_corr_dist",
    "seed": "rng_seed",
}


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Flags override the --config file, which overrides built-in defaults."""
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                base = PipelineConfig.model_validate_json(fh.read())
        except OSError as e:
            raise IngestError(f"cannot read {args.config}: {e}")
    else:
        base = PipelineConfig()
    overrides = {
        field: getattr(args, dest) for dest, field in _FLAG_FIELDS.items() if getattr(args, dest) is not None
    }
    # fields_set of the result records what the file or the flags chose explicitly
    return PipelineConfig.model_validate({**base.model_dump(exclude_unset=True), **overrides})


def _depth_cloud(args: argparse.Namespace) -> Optional[PointCloud]:
    if args.depth is None:
        return None
    if args.intrinsics is None:
        raise IngestError("--depth requires --intrinsics")
    intrinsics = load_intrinsics(args.intrinsics)
    depth = load_depth(args.depth, DEPTH_UNITS[args.depth_unit])
    mask = load_mask(args.mask) if args.mask else None
    cloud = backproject(depth, intrinsics, mask)
    logger.info(f"   → backprojected {cloud.count} depth points")
    return cloud


def cmd_pipeline(args: argparse.Namespace) -> int:
    if args.votefield is None:
        # Direction vectors only come from an external predictor
        raise IngestError("a vote field (--votefield) is required; depth alone cannot be voted on")

    cfg = resolve_config(args)
    threads = resolve_threads(args.threads)
    logger.info(f"🎯 pipeline: N={cfg.n_points} theta={cfg.theta} M={cfg.m_hypotheses} "
                f"refine={cfg.refine} seed={cfg.rng_seed} threads={threads}")
    if "diameter_fraction" in cfg.model_fields_set:
        logger.warning("⚠️ diameter_fraction only applies to eval and synth-bench; pipeline ignores it")

    started = time.perf_counter()
    field = load_vote_field(args.votefield)
    model_kp = load_keypoints(args.keypoints)
    if model_kp.k != field.k:
        raise ShapeMismatch(f"vote field has K={field.k}, keypoints file has {model_kp.k}")
    if "k_keypoints" in cfg.model_fields_set and cfg.k_keypoints != model_kp.k:
        raise ShapeMismatch(f"config asks for k_keypoints={cfg.k_keypoints}, keypoints file has {model_kp.k}")
    model = load_ply(args.model) if args.model else None
    if cfg.refine and model is None:
        raise IngestError("--refine requires --model")
    depth_cloud = _depth_cloud(args)
    if field.n < cfg.n_points:
        logger.warning(f"⚠️ vote field has {field.n} points, sampling {cfg.n_points} with replacement")
    sampled = field.take(subsample_indices(field.n, cfg.n_points, cfg.rng_seed))
    t_load = time.perf_counter()

    estimates = vote_all_keypoints(sampled, cfg.voting(), threads=threads)
    t_vote = time.perf_counter()
    pose = fit_from_votes(estimates, model_kp)
    t_fit = time.perf_counter()

    if cfg.refine:
        target = depth_cloud if depth_cloud is not None else field.scene_points
        result = icp_refine(pose, target, model, cfg.refine_iters, cfg.max_corr_dist)
        pose = result.pose
        logger.info(f"   → ICP {result.iterations} iterations, objective "
                    f"{result.initial_objective:.3e} → {result.objective:.3e}")
    t_refine = time.perf_counter()

    save_pose(pose, args.out)
    if verify_artifact(args.out, load_pose) is None:
        return EXIT_FAILURE

    for k, est in enumerate(estimates):
        print(f"keypoint {k}: confidence {est.confidence}/{sampled.n}")
    print(
        f"timing: load {1e3 * (t_load - started):.1f} ms, voting {1e3 * (t_vote - t_load):.1f} ms, "
        f"fitting {1e3 * (t_fit - t_vote):.1f} ms, refine {1e3 * (t_refine - t_fit):.1f} ms, "
        f"voting+fitting {1e3 * (t_fit - t_load):.1f} ms"
    )
    return EXIT_OK


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "pipeline",
        parents=[common_parent()],
        help="vote keypoints from a vote field and fit the object pose",
    )
    inputs = parser.add_argument_group("inputs")
    inputs.add_argument("--votefield", help="vote field (KV3DVF1 binary, or .json mirror)")
    inputs.add_argument("--keypoints", required=True, help="model keypoints JSON (from `keypoints`)")
    inputs.add_argument("--model", help="model point cloud (.ply); needed for --refine")
    inputs.add_argument("--depth", help="depth image (16-bit PNG, float TIFF or .npy); ICP target")
    inputs.add_argument("--intrinsics", help="camera intrinsics JSON")
    inputs.add_argument("--mask", help="object mask image; non-zero pixels are kept")
    inputs.add_argument("--depth-unit", choices=sorted(DEPTH_UNITS), default="m",
                        help="unit of stored depth values (default: m)")
    inputs.add_argument("--config", help="PipelineConfig JSON; flags override it")

    tuning = parser.add_argument_group("voting and fitting")
    tuning.add_argument("--theta", type=float, help=f"inlier cosine threshold {method_default(C.DEFAULT_THETA)}")
    tuning.add_argument("--hypotheses", type=positive_int,
                        help=f"RANSAC hypotheses per keypoint {repo_default(C.DEFAULT_M_HYPOTHESES)}")
    tuning.add_argument("--n-points", type=positive_int, help=f"scene points sampled {method_default(C.DEFAULT_N_POINTS)}")
    tuning.add_argument("--refine", action="store_true", default=None, help="ICP refinement after fitting")
    tuning.add_argument("--refine-iters", type=positive_int,
                        help=f"ICP iterations {repo_default(C.DEFAULT_REFINE_ITERS)}")
    tuning.add_argument("--max-corr-dist", type=float,
                        help=f"ICP correspondence cutoff, meters {repo_default(C.DEFAULT_MAX_CORR_DIST)}")
    tuning.add_argument("--seed", type=int, help="random seed (default: 0) [repo-default]")
    tuning.add_argument("--threads", type=positive_int, help="worker cap (default: KEYVOTE3D_THREADS, then cores)")

    parser.add_argument("--out", required=True, help="output pose JSON")
    parser.set_defaults(handler=guarded("pipeline", cmd_pipeline))
