# keyvote3d/services/camera.py
"""Pinhole camera intrinsics, depth/mask image loading and depth backprojection."""
import logging
import os
from typing import Optional, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from pydantic import ValidationError

from keyvote3d.errors import DimensionMismatch, IngestError, ParseError
from keyvote3d.models.geometry import DepthImage, PointCloud
from keyvote3d.models.schemas import CameraIntrinsics

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

# Multipliers from the stored depth unit to meters
DEPTH_UNITS = {"m": 1.0, "mm": 1e-3}


def load_intrinsics(path: PathLike) -> CameraIntrinsics:
    """Intrinsics JSON {fx, fy, cx, cy, width, height} in pixels."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return CameraIntrinsics.model_validate_json(fh.read())
    except OSError as e:
        raise IngestError(f"cannot read {path}: {e}")
    except ValidationError as e:
        raise ParseError(f"invalid intrinsics in {path}: {e.errors()[0]['msg']}")


def save_intrinsics(k: CameraIntrinsics, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(k.model_dump_json(indent=2))


def _read_image_array(path: PathLike) -> np.ndarray:
    if str(path).endswith(".npy"):
        try:
            return np.load(path, allow_pickle=False)
        except (OSError, ValueError) as e:
            raise IngestError(f"cannot read {path}: {e}")
    try:
        with Image.open(path) as img:
            if img.mode not in ("I;16", "I;16L", "I;16B", "I", "F", "L", "1"):
                raise IngestError(f"{path}: expected a single-channel image, got mode {img.mode}")
            return np.array(img)
    except (OSError, UnidentifiedImageError) as e:
        raise IngestError(f"cannot read {path}: {e}")


def load_depth(path: PathLike, depth_scale: float = 1.0) -> DepthImage:
    """Depth map from a 16-bit PNG, 32-bit float TIFF or .npy; values × depth_scale = meters.

    Non-finite and negative samples are treated as invalid (0).
    """
    raw = np.asarray(_read_image_array(path), dtype=np.float64)
    if raw.ndim != 2:
        raise DimensionMismatch(f"{path}: depth must be single-channel, got shape {raw.shape}")
    values = raw * depth_scale
    invalid = ~np.isfinite(values) | (values < 0)
    if np.any(invalid):
        logger.debug(f"   → {int(invalid.sum())} invalid depth samples set to 0")
        values[invalid] = 0.0
    return DepthImage(values=values)


def load_mask(path: PathLike) -> np.ndarray:
    """Binary mask image; non-zero pixels are kept."""
    raw = _read_image_array(path)
    if raw.ndim != 2:
        raise DimensionMismatch(f"{path}: mask must be single-channel, got shape {raw.shape}")
    return raw != 0


def backproject(depth: DepthImage, k: CameraIntrinsics, mask: Optional[np.ndarray] = None) -> PointCloud:
    """Camera-frame points (d(u-cx)/fx, d(v-cy)/fy, d) for valid pixels, row-major order."""
    if (depth.height, depth.width) != (k.height, k.width):
        raise DimensionMismatch(
            f"depth is {depth.width}x{depth.height}, intrinsics expect {k.width}x{k.height}"
        )
    valid = depth.values > 0
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != depth.values.shape:
            raise DimensionMismatch(f"mask shape {mask.shape} differs from depth {depth.values.shape}")
        valid &= mask

    v, u = np.nonzero(valid)  # row-major
    d = depth.values[v, u]
    points = np.stack([d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d], axis=1)
    logger.debug(f"backprojected {points.shape[0]} of {valid.size} pixels")
    return PointCloud(points=points)


def project(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Pixel coordinates (u, v) of camera-frame points, shape (n, 2)."""
    pts = np.asarray(points, dtype=np.float64)
    z = pts[:, 2]
    return np.stack([k.fx * pts[:, 0] / z + k.cx, k.fy * pts[:, 1] / z + k.cy], axis=1)
