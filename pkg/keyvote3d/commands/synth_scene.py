# keyvote3d/commands/synth_scene.py
"""Write a synthetic vote field with its ground-truth pose, for feeding `pipeline`."""
import argparse
import logging

from keyvote3d.commands import (
    EXIT_FAILURE,
    EXIT_OK,
    common_parent,
    guarded,
    method_default,
    positive_int,
    verify_artifact,
)
from keyvote3d.constants import DEFAULT_FPS_KEYPOINTS, DEFAULT_N_POINTS
from keyvote3d.models.schemas import PoseSampling, SynthConfig
from keyvote3d.services.ply import load_ply
from keyvote3d.services.serialization import (
    load_keypoints,
    load_pose,
    load_vote_field,
    save_keypoints,
    save_pose,
    save_vote_field,
)
from keyvote3d.services.synth import generate

logger = logging.getLogger(__name__)


def cmd_synth_scene(args: argparse.Namespace) -> int:
    model = load_ply(args.model)
    cfg = SynthConfig(
        n_points=args.n_points,
        k_keypoints=args.k + 1,
        angular_noise_deg=args.noise,
        outlier_fraction=args.outliers,
        occlusion_fraction=args.occlusion,
        pose_sampling=PoseSampling(args.sampling),
        rng_seed=args.seed,
    )
    scene = generate(model, cfg)
    logger.info(f"🎯 synthetic scene: {scene.field.n} points, {scene.field.k} keypoints, seed {cfg.rng_seed}")

    save_vote_field(scene.field, args.out)
    save_pose(scene.gt_pose, args.pose_out)
    save_keypoints(scene.model_kp, args.keypoints_out, fps_count=args.k)
    for path, loader in ((args.out, load_vote_field), (args.pose_out, load_pose), (args.keypoints_out, load_keypoints)):
        if verify_artifact(path, loader) is None:
            return EXIT_FAILURE

    print(f"vote field: {args.out} (N={scene.field.n}, K={scene.field.k})")
    print(f"ground-truth pose: {args.pose_out}")
    return EXIT_OK


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "synth-scene",
        parents=[common_parent()],
        help="generate a synthetic vote field, ground-truth pose and keypoints",
    )
    parser.add_argument("--model", required=True, help="model point cloud (.ply)")
    parser.add_argument("--k", type=positive_int, default=DEFAULT_FPS_KEYPOINTS,
                        help=f"number of FPS keypoints; the center is added on top {method_default(DEFAULT_FPS_KEYPOINTS)}")
    parser.add_argument("--n-points", type=positive_int, default=DEFAULT_N_POINTS,
                        help=f"scene points {method_default(DEFAULT_N_POINTS)}")
    parser.add_argument("--noise", type=float, default=0.0, help="angular noise sigma, degrees (default: 0)")
    parser.add_argument("--outliers", type=float, default=0.0, help="outlier fraction (default: 0)")
    parser.add_argument("--occlusion", type=float, default=0.0, help="half-space occlusion fraction (default: 0)")
    parser.add_argument("--sampling", choices=[s.value for s in PoseSampling],
                        default=PoseSampling.UNIFORM_ROTATION.value, help="pose distribution")
    parser.add_argument("--seed", type=int, default=0, help="random seed (default: 0) [repo-default]")
    parser.add_argument("--out", required=True, help="output vote field (KV3DVF1, or .json mirror)")
    parser.add_argument("--pose-out", required=True, help="output ground-truth pose JSON")
    parser.add_argument("--keypoints-out", required=True, help="output model keypoints JSON")
    parser.set_defaults(handler=guarded("synth-scene", cmd_synth_scene))
