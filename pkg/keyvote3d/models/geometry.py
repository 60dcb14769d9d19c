# keyvote3d/models/geometry.py
"""Numpy-backed domain types.

Point3 and UnitVec3 are rows of float64 arrays; their invariants are checked
by the containers that hold them. Every array is copied on construction and
marked read-only, so instances can be shared between threads.
"""
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.spatial.distance import pdist

from keyvote3d.constants import ROTATION_TOL, UNIT_NORM_TOL
from keyvote3d.errors import InsufficientWeight


def _frozen_array(value: Any, shape: tuple, name: str) -> np.ndarray:
    """Copy `value` to a read-only float64 array; -1 in `shape` means any length."""
    arr = np.array(value, dtype=np.float64)
    if arr.size == 0 and arr.ndim == 1 and len(shape) > 1:
        arr = arr.reshape((0,) + tuple(abs(s) for s in shape[1:]))
    if arr.ndim != len(shape) or any(s != -1 and s != a for s, a in zip(shape, arr.shape)):
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    arr.setflags(write=False)
    return arr


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class PointCloud(_ArrayModel):
    """Ordered 3D points in meters, shape (count, 3)."""

    points: np.ndarray

    @field_validator("points", mode="before")
    @classmethod
    def _check_points(cls, v):
        return _frozen_array(v, (-1, 3), "points")

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    def take(self, indices) -> "PointCloud":
        return PointCloud(points=self.points[np.asarray(indices, dtype=np.intp)])


class RigidTransform(_ArrayModel):
    """x -> rotation @ x + translation, rotation in SO(3), translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    @field_validator("rotation", mode="before")
    @classmethod
    def _check_rotation(cls, v):
        r = _frozen_array(v, (3, 3), "rotation")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ROTATION_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise ValueError("rotation determinant is not +1")
        return r

    @field_validator("translation", mode="before")
    @classmethod
    def _check_translation(cls, v):
        return _frozen_array(np.ravel(v), (3,), "translation")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(rotation=np.eye(3), translation=np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix) -> "RigidTransform":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(rotation=m[:3, :3], translation=m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (n, 3) array (or a single 3-vector)."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        r_inv = self.rotation.T
        return RigidTransform(rotation=r_inv, translation=-(r_inv @ self.translation))

    def rotation_angle(self) -> float:
        """Rotation angle in radians, in [0, pi]."""
        cos_angle = (np.trace(self.rotation) - 1.0) / 2.0
        return float(np.arccos(np.clip(cos_angle, -1.0, 1.0)))


class ModelKeypoints(_ArrayModel):
    """K keypoints in the model frame; pairwise distinct."""

    keypoints: np.ndarray

    @field_validator("keypoints", mode="before")
    @classmethod
    def _check_keypoints(cls, v):
        kp = _frozen_array(v, (-1, 3), "keypoints")
        if kp.shape[0] < 1:
            raise ValueError("at least one keypoint is required")
        if kp.shape[0] >= 2 and pdist(kp).min() <= 0.0:
            raise ValueError("keypoints must be pairwise distinct")
        return kp

    @property
    def k(self) -> int:
        return int(self.keypoints.shape[0])


class VoteField(_ArrayModel):
    """Per scene point, K unit vectors pointing from the point toward each keypoint."""

    scene_points: PointCloud
    vectors: np.ndarray  # (N, K, 3)

    @field_validator("vectors", mode="before")
    @classmethod
    def _check_vectors(cls, v):
        arr = _frozen_array(v, (-1, -1, 3), "vectors")
        if arr.shape[1] < 1:
            raise ValueError("vote field needs at least one keypoint column")
        if arr.size and np.max(np.abs(np.linalg.norm(arr, axis=2) - 1.0)) > UNIT_NORM_TOL:
            raise ValueError("vote vectors must have unit norm")
        return arr

    @model_validator(mode="after")
    def _check_rows(self):
        if self.vectors.shape[0] != self.scene_points.count:
            raise ValueError(
                f"vectors has {self.vectors.shape[0]} rows for {self.scene_points.count} scene points"
            )
        return self

    @property
    def n(self) -> int:
        return self.scene_points.count

    @property
    def k(self) -> int:
        return int(self.vectors.shape[1])

    def keypoint_vectors(self, keypoint_index: int) -> np.ndarray:
        return self.vectors[:, keypoint_index, :]

    def take(self, indices) -> "VoteField":
        idx = np.asarray(indices, dtype=np.intp)
        return VoteField(scene_points=self.scene_points.take(idx), vectors=self.vectors[idx])


class KeypointEstimate(_ArrayModel):
    """Voted keypoint position (camera frame) and its inlier vote count."""

    position: np.ndarray
    confidence: int

    @field_validator("position", mode="before")
    @classmethod
    def _check_position(cls, v):
        return _frozen_array(np.ravel(v), (3,), "position")

    @field_validator("confidence")
    @classmethod
    def _check_confidence(cls, v):
        if v < 0:
            raise ValueError("confidence must be non-negative")
        return v


class Correspondences(_ArrayModel):
    """Weighted model/scene keypoint pairs; needs at least 3 positive weights."""

    model_points: np.ndarray
    scene_points: np.ndarray
    weights: np.ndarray

    @field_validator("model_points", "scene_points", mode="before")
    @classmethod
    def _check_points(cls, v):
        return _frozen_array(v, (-1, 3), "points")

    @field_validator("weights", mode="before")
    @classmethod
    def _check_weights(cls, v):
        w = _frozen_array(np.ravel(v), (-1,), "weights")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        return w

    @model_validator(mode="after")
    def _check_lengths(self):
        n = self.weights.shape[0]
        if self.model_points.shape[0] != n or self.scene_points.shape[0] != n:
            raise ValueError("model_points, scene_points and weights must have equal length")
        positive = int(np.count_nonzero(self.weights > 0))
        if positive < 3:
            raise InsufficientWeight(f"need at least 3 positive weights, got {positive}")
        return self


class DepthImage(_ArrayModel):
    """height × width depth in meters; 0 marks an invalid pixel."""

    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _check_values(cls, v):
        arr = _frozen_array(v, (-1, -1), "depth values")
        if np.any(arr < 0):
            raise ValueError("depth values must be non-negative")
        return arr

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])
