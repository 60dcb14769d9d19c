# keyvote3d/commands/synth_bench.py
import argparse
import logging
import os
from typing import List

from keyvote3d.commands import EXIT_FAILURE, EXIT_OK, common_parent, guarded, positive_int, verify_artifact
from keyvote3d.config import resolve_threads
from keyvote3d.errors import IngestError, ParseError
from keyvote3d.models.schemas import BenchmarkRow, SweepSpec
from keyvote3d.services.ply import load_ply
from keyvote3d.services.serialization import load_benchmark_csv, save_benchmark_csv, save_benchmark_json
from keyvote3d.services.synth import benchmark_sweep

logger = logging.getLogger(__name__)


def load_sweep_spec(path: str) -> SweepSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return SweepSpec.model_validate_json(fh.read())
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}")


def format_table(rows: List[BenchmarkRow]) -> str:
    header = f"{'noise°':>7} {'outl':>5} {'occl':>5} {'N':>4} {'acc':>7} {'meanADD[m]':>11} {'ms':>8} {'fail':>5}"
    lines = [header, "-" * len(header)]
    for r in rows:
        c = r.config
        lines.append(
            f"{c.angular_noise_deg:7.2f} {c.outlier_fraction:5.2f} {c.occlusion_fraction:5.2f} "
            f"{c.n_points:4d} {100.0 * r.accuracy:6.1f}% {r.mean_add:11.5f} "
            f"{1e3 * r.mean_runtime:8.2f} {r.failures:5d}"
        )
    return "\n".join(lines)


def cmd_synth_bench(args: argparse.Namespace) -> int:
    """Run a synthetic robustness sweep and write it as CSV (plus JSON)."""
    model = load_ply(args.model)
    spec = load_sweep_spec(args.sweep)
    if args.trials is not None:
        spec = spec.model_copy(update={"trials": args.trials})
    grid = spec.expand_grid()
    threads = resolve_threads(args.threads)
    logger.info(f"🎯 sweep: {len(grid)} cells × {spec.trials} trials on {threads} threads")

    rows = benchmark_sweep(
        model,
        grid,
        spec.trials,
        voting=spec.voting,
        diameter_fraction=spec.diameter_fraction,
        refine=spec.refine,
        refine_iters=spec.refine_iters,
        max_corr_dist=spec.max_corr_dist,
        symmetric=spec.symmetric,
        threads=threads,
    )

    save_benchmark_csv(rows, args.out)
    json_out = args.json_out or os.path.splitext(args.out)[0] + ".json"
    save_benchmark_json(rows, json_out)
    reloaded = verify_artifact(args.out, load_benchmark_csv)
    if reloaded is None:
        return EXIT_FAILURE
    if len(reloaded) != len(rows):
        raise ParseError(f"{args.out}: wrote {len(rows)} rows, read back {len(reloaded)}")

    print(format_table(rows))
    return EXIT_OK


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "synth-bench",
        parents=[common_parent()],
        help="synthetic robustness benchmark over a grid of corruption settings",
    )
    parser.add_argument("--model", required=True, help="model point cloud (.ply)")
    parser.add_argument("--sweep", required=True, help="SweepSpec JSON (grid and/or base + axes)")
    parser.add_argument("--trials", type=positive_int, help="override the sweep's trial count")
    parser.add_argument("--threads", type=positive_int, help="worker cap (default: KEYVOTE3D_THREADS, then cores)")
    parser.add_argument("--out", required=True, help="output CSV")
    parser.add_argument("--json-out", help="output JSON (default: --out with .json suffix)")
    parser.set_defaults(handler=guarded("synth-bench", cmd_synth_bench))
