# keyvote3d/services/serialization.py
"""Vote-field container, pose/keypoint JSON, and report writers.

Binary vote-field layout (little-endian):

    b"KV3DVF1\\0"            8-byte magic
    u32 N, u32 K
    N × 3 float32           scene points, meters
    N × K × 3 float32       unit vectors, row-major by point then keypoint

A file whose name ends in `.json` is read and written as the JSON mirror
(`VoteFieldDocument`) instead.
"""
import csv
import json
import logging
import math
import os
import struct
from typing import List, Sequence, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from keyvote3d.constants import ORTHO_SNAP_TOL, POSE_REORTHO_TOL, VOTE_FIELD_MAGIC, VOTE_FIELD_NORM_TOL
from keyvote3d.errors import (
    IngestError,
    MagicMismatch,
    NormViolation,
    NotARotation,
    ParseError,
    TruncatedFile,
)
from keyvote3d.models.geometry import ModelKeypoints, PointCloud, RigidTransform, VoteField
from keyvote3d.models.schemas import (
    BenchmarkRow,
    EvalReport,
    FpsSeedRule,
    KeypointsDocument,
    PoseDocument,
    SynthConfig,
    VoteFieldDocument,
)
from keyvote3d.services.geometry import min_pairwise_distance

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]
DocT = TypeVar("DocT", bound=BaseModel)

_COUNTS = struct.Struct("<II")
_HEADER_SIZE = len(VOTE_FIELD_MAGIC) + _COUNTS.size


def _read_bytes(path: PathLike) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}")


def _read_document(path: PathLike, doc_type: Type[DocT]) -> DocT:
    raw = _read_bytes(path)
    try:
        return doc_type.model_validate_json(raw)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "document"
        raise ParseError(f"invalid {doc_type.__name__} in {path}: {where}: {first['msg']}")


def _write_text(path: PathLike, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")


def _is_json(path: PathLike) -> bool:
    return str(path).lower().endswith(".json")


# --- vote fields ---

def _checked_vectors(vectors: np.ndarray) -> np.ndarray:
    """Renormalize vectors within VOTE_FIELD_NORM_TOL of unit length, reject the rest."""
    norms = np.linalg.norm(vectors, axis=-1)
    off = np.abs(norms - 1.0)
    if off.size and off.max() > VOTE_FIELD_NORM_TOL:
        point, keypoint = np.unravel_index(int(np.argmax(off)), off.shape)
        raise NormViolation(
            f"vector (point {point}, keypoint {keypoint}) has norm {norms[point, keypoint]:.6g}"
        )
    return vectors / norms[..., None]


def _vote_field_from_arrays(points: np.ndarray, vectors: np.ndarray, path: PathLike) -> VoteField:
    if not (np.all(np.isfinite(points)) and np.all(np.isfinite(vectors))):
        raise ParseError(f"{path}: vote field contains NaN or Inf")
    return VoteField(scene_points=PointCloud(points=points), vectors=_checked_vectors(vectors))


def save_vote_field(field: VoteField, path: PathLike) -> None:
    if _is_json(path):
        doc = VoteFieldDocument(
            N=field.n,
            K=field.k,
            scene_points=field.scene_points.points.tolist(),
            vectors=field.vectors.tolist(),
        )
        _write_text(path, doc.model_dump_json())
        return
    with open(path, "wb") as fh:
        fh.write(VOTE_FIELD_MAGIC)
        fh.write(_COUNTS.pack(field.n, field.k))
        fh.write(np.ascontiguousarray(field.scene_points.points, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(field.vectors, dtype="<f4").tobytes())


def _load_vote_field_json(path: PathLike) -> VoteField:
    doc = _read_document(path, VoteFieldDocument)
    try:
        points = np.asarray(doc.scene_points, dtype=np.float64)
        vectors = np.asarray(doc.vectors, dtype=np.float64)
    except ValueError:
        raise ParseError(f"{path}: scene_points and vectors must be rectangular arrays")
    if doc.N == 0 and points.size == 0 and vectors.size == 0:
        points, vectors = points.reshape(0, 3), vectors.reshape(0, doc.K, 3)
    if points.shape != (doc.N, 3):
        raise ParseError(f"{path}: scene_points must be {doc.N}x3, got {points.shape}")
    if vectors.shape != (doc.N, doc.K, 3):
        raise ParseError(f"{path}: vectors must be {doc.N}x{doc.K}x3, got {vectors.shape}")
    return _vote_field_from_arrays(points, vectors, path)


def load_vote_field(path: PathLike) -> VoteField:
    """Read a KV3DVF1 container (or its JSON mirror); near-unit vectors are renormalized."""
    if _is_json(path):
        return _load_vote_field_json(path)

    data = _read_bytes(path)
    magic_len = len(VOTE_FIELD_MAGIC)
    if data[:magic_len] != VOTE_FIELD_MAGIC:
        if len(data) < magic_len and VOTE_FIELD_MAGIC.startswith(data):
            raise TruncatedFile(f"{path}: {len(data)} bytes, shorter than the magic")
        raise MagicMismatch(f"{path}: not a KV3DVF1 vote-field file")
    if len(data) < _HEADER_SIZE:
        raise TruncatedFile(f"{path}: header needs {_HEADER_SIZE} bytes, file has {len(data)}")

    n, k = _COUNTS.unpack_from(data, magic_len)
    if k == 0:
        raise ParseError(f"{path}: K must be positive", offset=magic_len + 4)
    n_point_floats = 3 * n
    n_vector_floats = 3 * n * k
    expected = _HEADER_SIZE + 4 * (n_point_floats + n_vector_floats)
    if len(data) < expected:
        raise TruncatedFile(f"{path}: expected {expected} bytes for N={n}, K={k}, got {len(data)}")
    if len(data) > expected:
        raise ParseError(f"{path}: {len(data) - expected} trailing bytes", offset=expected)

    if n == 0:
        points, vectors = np.empty((0, 3)), np.empty((0, k, 3))
    else:
        points = np.frombuffer(data, dtype="<f4", count=n_point_floats, offset=_HEADER_SIZE)
        vectors = np.frombuffer(data, dtype="<f4", count=n_vector_floats,
                                offset=_HEADER_SIZE + 4 * n_point_floats)
        points = points.astype(np.float64).reshape(n, 3)
        vectors = vectors.astype(np.float64).reshape(n, k, 3)
    field = _vote_field_from_arrays(points, vectors, path)
    logger.debug(f"loaded vote field N={n} K={k} from {path}")
    return field


# --- poses ---

def save_pose(pose: RigidTransform, path: PathLike) -> None:
    doc = PoseDocument(rotation=pose.rotation.ravel().tolist(), translation=pose.translation.tolist())
    _write_text(path, doc.model_dump_json(indent=2))


def load_pose(path: PathLike) -> RigidTransform:
    """Pose JSON; rotations within POSE_REORTHO_TOL of SO(3) are snapped back onto it."""
    doc = _read_document(path, PoseDocument)
    rotation = np.asarray(doc.rotation, dtype=np.float64).reshape(3, 3)
    translation = np.asarray(doc.translation, dtype=np.float64)
    if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
        raise ParseError(f"{path}: pose contains NaN or Inf")

    if not np.linalg.det(rotation) > 0.0:
        raise NotARotation(f"{path}: rotation determinant is not positive")
    residual = float(np.max(np.abs(rotation.T @ rotation - np.eye(3))))
    if not residual <= POSE_REORTHO_TOL:
        raise NotARotation(f"{path}: rotation is off orthonormal by {residual:.3g}")
    if residual > ORTHO_SNAP_TOL:
        u, _, vt = np.linalg.svd(rotation)
        rotation = u @ vt
        logger.debug(f"re-orthonormalized rotation from {path} (residual {residual:.3g})")
    return RigidTransform(rotation=rotation, translation=translation)


# --- keypoints ---

def save_keypoints(model_kp: ModelKeypoints, path: PathLike, fps_count: int,
                   seed_rule: FpsSeedRule = FpsSeedRule.FARTHEST_FROM_CENTROID) -> None:
    doc = KeypointsDocument(
        keypoints=model_kp.keypoints.tolist(),
        fps_count=fps_count,
        seed_rule=seed_rule,
        min_pairwise_distance=min_pairwise_distance(model_kp.keypoints) if model_kp.k > 1 else 0.0,
    )
    _write_text(path, doc.model_dump_json(indent=2))


def load_keypoints(path: PathLike) -> ModelKeypoints:
    doc = _read_document(path, KeypointsDocument)
    try:
        return ModelKeypoints(keypoints=doc.keypoints)
    except ValidationError as e:
        raise ParseError(f"invalid keypoints in {path}: {e.errors()[0]['msg']}")


# --- reports ---

def save_report(report: EvalReport, path: PathLike) -> None:
    _write_text(path, report.model_dump_json(indent=2))


def load_report(path: PathLike) -> EvalReport:
    return _read_document(path, EvalReport)


BENCHMARK_COLUMNS: List[str] = list(SynthConfig.model_fields) + [
    "trials", "failures", "accuracy", "mean_add_m", "mean_runtime_s",
]


def _benchmark_record(row: BenchmarkRow) -> dict:
    record = row.config.model_dump(mode="json")
    record.update(
        trials=row.trials,
        failures=row.failures,
        accuracy=row.accuracy,
        mean_add_m=row.mean_add,
        mean_runtime_s=row.mean_runtime,
    )
    return record


def save_benchmark_csv(rows: Sequence[BenchmarkRow], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCHMARK_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(_benchmark_record(row))


def load_benchmark_csv(path: PathLike) -> List[dict]:
    """Rows of a benchmark CSV as dicts of strings."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != BENCHMARK_COLUMNS:
                raise ParseError(f"{path}: unexpected benchmark header {reader.fieldnames}", line=1)
            return list(reader)
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}")


def save_benchmark_json(rows: Sequence[BenchmarkRow], path: PathLike) -> None:
    # NaN (no completed trials) becomes null
    records = [
        {key: (None if isinstance(v, float) and math.isnan(v) else v) for key, v in _benchmark_record(r).items()}
        for r in rows
    ]
    _write_text(path, json.dumps({"rows": records}, indent=2))
