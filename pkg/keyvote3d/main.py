# keyvote3d/main.py
import argparse
import logging
import sys
from typing import List, Optional

from keyvote3d import __version__
from keyvote3d.commands import evaluate, keypoints, pipeline, synth_bench, synth_scene
from keyvote3d.config import get_settings

LOG_FORMAT = '%(asctime)s | %(levelname)-8s | %(name)-20s | %(message)s'
LOG_DATEFMT = '%Y-%m-%d %H:%M:%S'

logger = logging.getLogger(__name__)


def configure_logging(verbose: bool = False) -> None:
    """Log to stderr (stdout carries command output) and optionally to KEYVOTE3D_LOG_FILE."""
    settings = get_settings()
    level = logging.DEBUG if verbose else getattr(logging, settings.KEYVOTE3D_LOG_LEVEL.upper(), logging.INFO)
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if settings.KEYVOTE3D_LOG_FILE:
        handlers.append(logging.FileHandler(settings.KEYVOTE3D_LOG_FILE, encoding='utf-8'))
    logging.basicConfig(level=level, format=LOG_FORMAT, datefmt=LOG_DATEFMT, handlers=handlers)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="keyvote3d",
        description="3D keypoint voting and weighted rigid fitting for 6D object pose.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # --- Subcommands ---
    keypoints.register(subparsers)
    pipeline.register(subparsers)
    evaluate.register(subparsers)
    synth_bench.register(subparsers)
    synth_scene.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    logger.debug(f"keyvote3d {__version__}: {args.command}")
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
