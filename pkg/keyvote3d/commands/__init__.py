# keyvote3d/commands/__init__.py
"""Subcommand modules. Each exposes `register(subparsers)`; handlers return an exit code."""
import argparse
import logging
import sys
from typing import Callable, Optional

from pydantic import ValidationError

from keyvote3d.errors import (
    GeometryError,
    IngestError,
    KeyvoteError,
    PoseFitError,
    SynthError,
    VoteFieldError,
    VotingError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_VOTING = 3
EXIT_FIT = 4

Handler = Callable[[argparse.Namespace], int]


def method_default(value) -> str:
    return f"(default: {value}) [paper]"


def repo_default(value) -> str:
    return f"(default: {value}) [repo-default]"


def common_parent() -> argparse.ArgumentParser:
    """Flags shared by every subcommand."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parent


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, VotingError):
        return EXIT_VOTING
    if isinstance(exc, PoseFitError):
        return EXIT_FIT
    if isinstance(exc, (IngestError, GeometryError, VoteFieldError, SynthError, ValidationError)):
        return EXIT_INPUT
    return EXIT_FAILURE


def _fail(name: str, exc: BaseException) -> int:
    code = exit_code_for(exc)
    logger.error(f"❌ {name} failed: {type(exc).__name__}: {exc}")
    print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return code


def guarded(name: str, handler: Handler) -> Handler:
    """Wrap a handler so library errors become exit codes instead of tracebacks."""

    def _run(args: argparse.Namespace) -> int:
        try:
            return handler(args)
        except (KeyvoteError, ValidationError) as e:
            return _fail(name, e)
        except Exception as e:
            logger.exception(f"❌ {name}: unexpected error")
            return _fail(name, e)

    return _run


def verify_artifact(path: str, loader: Callable[[str], object]) -> Optional[object]:
    """Reload a written artifact; None (after logging) when it does not validate."""
    try:
        loaded = loader(path)
    except (KeyvoteError, ValidationError) as e:
        logger.error(f"❌ written artifact {path} does not validate: {e}")
        print(f"error: written artifact {path} does not validate: {e}", file=sys.stderr)
        return None
    logger.info(f"✅ wrote {path}")
    return loaded


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value
