# keyvote3d/commands/keypoints.py
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
from keyvote3d.constants import DEFAULT_FPS_KEYPOINTS
from keyvote3d.models.schemas import FpsSeedRule
from keyvote3d.services.geometry import min_pairwise_distance
from keyvote3d.services.ply import load_ply
from keyvote3d.services.serialization import load_keypoints, save_keypoints
from keyvote3d.services.synth import model_keypoints_with_center

logger = logging.getLogger(__name__)


def cmd_keypoints(args: argparse.Namespace) -> int:
    """FPS keypoints plus the model centroid, written as JSON."""
    model = load_ply(args.model)
    logger.info(f"🎯 selecting {args.k} FPS keypoints from {model.count} model points")
    model_kp = model_keypoints_with_center(model, args.k + 1, FpsSeedRule(args.seed_rule))

    save_keypoints(model_kp, args.out, fps_count=args.k, seed_rule=FpsSeedRule(args.seed_rule))
    if verify_artifact(args.out, load_keypoints) is None:
        return EXIT_FAILURE

    spread = min_pairwise_distance(model_kp.keypoints) if model_kp.k > 1 else 0.0
    print(f"keypoints: {model_kp.k} ({args.k} FPS + center)")
    print(f"min pairwise distance: {spread:.6f} m")
    return EXIT_OK


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "keypoints",
        parents=[common_parent()],
        help="select FPS keypoints and the center point of a model",
    )
    parser.add_argument("--model", required=True, help="model point cloud (.ply, meters)")
    parser.add_argument("--k", type=positive_int, default=DEFAULT_FPS_KEYPOINTS,
                        help=f"number of FPS keypoints; the center is added on top {method_default(DEFAULT_FPS_KEYPOINTS)}")
    parser.add_argument("--seed-rule", choices=[r.value for r in FpsSeedRule],
                        default=FpsSeedRule.FARTHEST_FROM_CENTROID.value,
                        help="first FPS pick (default: farthest_from_centroid)")
    parser.add_argument("--out", required=True, help="output keypoints JSON")
    parser.set_defaults(handler=guarded("keypoints", cmd_keypoints))
