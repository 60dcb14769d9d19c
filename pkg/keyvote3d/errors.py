# keyvote3d/errors.py
"""Exception hierarchy for the library.

None of these derive from ValueError, so raising them inside pydantic
validators propagates them unchanged instead of being folded into a
ValidationError.
"""
from typing import Optional


class KeyvoteError(Exception):
    """Root of every error raised on purpose by keyvote3d."""


# --- geometry-core ---

class GeometryError(KeyvoteError):
    pass


class InsufficientPoints(GeometryError):
    pass


class DegenerateGeometry(GeometryError):
    pass


# --- vote-field ---

class VoteFieldError(KeyvoteError):
    pass


class ShapeMismatch(VoteFieldError):
    pass


# --- voting ---

class VotingError(KeyvoteError):
    """Voting failure, optionally tagged with the keypoint it happened on."""

    def __init__(self, message: str, keypoint_index: Optional[int] = None):
        super().__init__(message)
        self.keypoint_index = keypoint_index


class DegenerateLines(VotingError):
    pass


class AllHypothesesDegenerate(VotingError):
    pass


# --- pose-fit ---

class PoseFitError(KeyvoteError):
    pass


class DegenerateCorrespondences(PoseFitError):
    pass


class InsufficientWeight(PoseFitError):
    pass


class AllZeroConfidence(PoseFitError):
    pass


class NoCorrespondences(PoseFitError):
    pass


# --- synth-oracle ---

class SynthError(KeyvoteError):
    pass


class DegenerateScene(SynthError):
    pass


# --- io-ingest ---

class IngestError(KeyvoteError):
    pass


class ParseError(IngestError):
    """Malformed file; `line` is 1-based for text, `offset` is a byte offset."""

    def __init__(self, message: str, line: Optional[int] = None, offset: Optional[int] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.offset = offset


class UnsupportedFormat(IngestError):
    pass


class MagicMismatch(IngestError):
    pass


class TruncatedFile(IngestError):
    pass


class NormViolation(IngestError):
    pass


class NotARotation(IngestError):
    pass


class DimensionMismatch(IngestError):
    pass
