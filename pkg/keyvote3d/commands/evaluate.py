# keyvote3d/commands/evaluate.py
import argparse
import logging

from keyvote3d.commands import EXIT_FAILURE, EXIT_OK, common_parent, guarded, method_default, verify_artifact
from keyvote3d.constants import DEFAULT_DIAMETER_FRACTION
from keyvote3d.errors import IngestError
from keyvote3d.services.metrics import EvalInstance, evaluate
from keyvote3d.services.ply import load_ply
from keyvote3d.services.serialization import load_pose, load_report, save_report

logger = logging.getLogger(__name__)


def cmd_eval(args: argparse.Namespace) -> int:
    """Score predicted poses against ground truth with ADD (or ADD-S)."""
    if len(args.pred) != len(args.gt):
        raise IngestError(f"{len(args.pred)} predicted poses for {len(args.gt)} ground-truth poses")
    if args.labels is not None and len(args.labels) != len(args.pred):
        raise IngestError(f"{len(args.labels)} labels for {len(args.pred)} pose pairs")

    model = load_ply(args.model)
    labels = args.labels or [None] * len(args.pred)
    instances = [
        EvalInstance(model=model, gt=load_pose(gt), pred=load_pose(pred), symmetric=args.symmetric, label=label)
        for pred, gt, label in zip(args.pred, args.gt, labels)
    ]
    report = evaluate(instances, args.diameter_fraction)

    save_report(report, args.out)
    if verify_artifact(args.out, load_report) is None:
        return EXIT_FAILURE

    metric = "ADD-S" if args.symmetric else "ADD"
    for i, r in enumerate(report.per_instance):
        logger.debug(f"   → instance {i}: {metric} {r.add_distance:.6f} m (threshold {r.threshold:.6f} m)")
    for label, acc in report.per_label_accuracy.items():
        print(f"{label}: {100.0 * acc:.1f}%")
    if report.label_average is not None:
        print(f"label average: {100.0 * report.label_average:.1f}%")
    print(f"accuracy: {100.0 * report.accuracy:.1f}%")
    return EXIT_OK


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "eval",
        parents=[common_parent()],
        help="ADD / ADD-S accuracy of predicted poses",
    )
    parser.add_argument("--pred", nargs="+", required=True, help="predicted pose JSON files")
    parser.add_argument("--gt", nargs="+", required=True, help="ground-truth pose JSON files, same order")
    parser.add_argument("--model", required=True, help="model point cloud (.ply)")
    parser.add_argument("--symmetric", action="store_true", help="score with ADD-S")
    parser.add_argument("--labels", nargs="+", help="object label per pose pair (per-label accuracy)")
    parser.add_argument("--diameter-fraction", type=float, default=DEFAULT_DIAMETER_FRACTION,
                        help=f"accuracy threshold as a fraction of the model diameter {method_default(DEFAULT_DIAMETER_FRACTION)}")
    parser.add_argument("--out", required=True, help="output report JSON")
    parser.set_defaults(handler=guarded("eval", cmd_eval))
