# keyvote3d/models/schemas.py
import itertools
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from keyvote3d import constants as C


class FpsSeedRule(str, Enum):
    FARTHEST_FROM_CENTROID = "farthest_from_centroid"
    INDEX_0 = "index_0"


class PoseSampling(str, Enum):
    UNIFORM_ROTATION = "uniform_rotation"
    SMALL_ANGLE = "small_angle"


class MetricKind(str, Enum):
    ADD = "ADD"
    ADD_S = "ADD_S"


# --- Run configuration ---

class VotingConfig(BaseModel):
    m_hypotheses: int = Field(C.DEFAULT_M_HYPOTHESES, ge=1)
    theta: float = Field(C.DEFAULT_THETA, gt=0.0, le=1.0)  # inlier cosine threshold
    rng_seed: int = 0


class SynthConfig(BaseModel):
    n_points: int = Field(C.DEFAULT_N_POINTS, ge=1)
    k_keypoints: int = Field(C.DEFAULT_K_KEYPOINTS, ge=1)  # FPS keypoints + center
    angular_noise_deg: float = Field(0.0, ge=0.0)
    outlier_fraction: float = Field(0.0, ge=0.0, le=1.0)
    occlusion_fraction: float = Field(0.0, ge=0.0, lt=1.0)
    pose_sampling: PoseSampling = PoseSampling.UNIFORM_ROTATION
    rng_seed: int = 0
    translation_half_extent: float = Field(C.DEFAULT_TRANSLATION_HALF_EXTENT, ge=0.0)
    depth_offset: float = C.DEFAULT_DEPTH_OFFSET
    max_small_angle_deg: float = Field(C.DEFAULT_MAX_SMALL_ANGLE_DEG, ge=0.0, le=180.0)


class PipelineConfig(BaseModel):
    k_keypoints: int = Field(C.DEFAULT_K_KEYPOINTS, ge=1)
    n_points: int = Field(C.DEFAULT_N_POINTS, ge=1)
    theta: float = Field(C.DEFAULT_THETA, gt=0.0, le=1.0)
    m_hypotheses: int = Field(C.DEFAULT_M_HYPOTHESES, ge=1)
    refine: bool = False
    refine_iters: int = Field(C.DEFAULT_REFINE_ITERS, ge=1)
    max_corr_dist: float = Field(C.DEFAULT_MAX_CORR_DIST, ge=0.0)
    diameter_fraction: float = Field(C.DEFAULT_DIAMETER_FRACTION, gt=0.0)
    rng_seed: int = 0

    def voting(self) -> VotingConfig:
        return VotingConfig(m_hypotheses=self.m_hypotheses, theta=self.theta, rng_seed=self.rng_seed)


class SweepSpec(BaseModel):
    """Benchmark grid: explicit configs plus a `base` expanded over `axes`."""

    trials: int = Field(100, ge=1)
    diameter_fraction: float = Field(C.DEFAULT_DIAMETER_FRACTION, gt=0.0)
    voting: VotingConfig = VotingConfig()
    refine: bool = False
    refine_iters: int = Field(C.DEFAULT_REFINE_ITERS, ge=1)
    max_corr_dist: float = Field(C.DEFAULT_MAX_CORR_DIST, ge=0.0)
    symmetric: bool = False
    grid: List[SynthConfig] = []
    base: Optional[SynthConfig] = None
    axes: Dict[str, List[Any]] = {}

    @model_validator(mode="after")
    def _check_axes(self):
        unknown = set(self.axes) - set(SynthConfig.model_fields)
        if unknown:
            raise ValueError(f"unknown sweep axes: {sorted(unknown)}")
        if not self.grid and self.base is None and not self.axes:
            raise ValueError("sweep spec needs `grid`, `base` or `axes`")
        return self

    def expand_grid(self) -> List[SynthConfig]:
        configs = list(self.grid)
        if self.base is not None or self.axes:
            base = self.base or SynthConfig()
            names = list(self.axes)
            for values in itertools.product(*(self.axes[n] for n in names)):
                configs.append(SynthConfig.model_validate({**base.model_dump(), **dict(zip(names, values))}))
        return configs


# --- File documents ---

class CameraIntrinsics(BaseModel):
    fx: float = Field(gt=0.0)  # pixels
    fy: float = Field(gt=0.0)
    cx: float
    cy: float
    width: int = Field(gt=0)
    height: int = Field(gt=0)

    @model_validator(mode="after")
    def _check_principal_point(self):
        if not (0.0 <= self.cx < self.width and 0.0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        return self


class PoseDocument(BaseModel):
    rotation: List[float] = Field(min_length=9, max_length=9)  # row-major
    translation: List[float] = Field(min_length=3, max_length=3)  # meters
    units: str = "meters"


class VoteFieldDocument(BaseModel):
    """JSON mirror of the binary vote-field container."""

    N: int = Field(ge=0, le=0xFFFFFFFF)
    K: int = Field(ge=1, le=0xFFFFFFFF)
    scene_points: List[List[float]]  # N × 3, meters
    vectors: List[List[List[float]]]  # N × K × 3, unit


class KeypointsDocument(BaseModel):
    keypoints: List[List[float]]  # meters, model frame; center point last
    fps_count: int
    seed_rule: FpsSeedRule = FpsSeedRule.FARTHEST_FROM_CENTROID
    min_pairwise_distance: float
    units: str = "meters"


# --- Reports ---

class InstanceResult(BaseModel):
    add_distance: float  # meters
    metric_kind: MetricKind
    threshold: float  # meters
    passed: bool
    label: Optional[str] = None
    rotation_error_deg: Optional[float] = None
    translation_error: Optional[float] = None  # meters


class EvalReport(BaseModel):
    per_instance: List[InstanceResult]
    accuracy: float = Field(ge=0.0, le=1.0)
    threshold_fraction: float
    per_label_accuracy: Dict[str, float] = {}
    label_average: Optional[float] = None  # mean of per_label_accuracy

    @model_validator(mode="after")
    def _check_consistency(self):
        for item in self.per_instance:
            if item.passed != (item.add_distance < item.threshold):
                raise ValueError("passed must equal add_distance < threshold")
        if self.per_instance:
            expected = sum(i.passed for i in self.per_instance) / len(self.per_instance)
            if abs(expected - self.accuracy) > 1e-12:
                raise ValueError("accuracy must equal the passed fraction")
        return self


class BenchmarkRow(BaseModel):
    config: SynthConfig
    trials: int
    failures: int  # trials aborted by a voting/fit/scene error
    accuracy: float
    mean_add: float  # meters, over completed trials (NaN when none completed)
    mean_runtime: float  # seconds per voting + fitting stage
