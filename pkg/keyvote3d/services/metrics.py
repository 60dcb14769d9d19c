# keyvote3d/services/metrics.py
"""ADD / ADD-S pose errors and thresholded accuracy reports.

Both metrics pair the ground-truth pose (R, t) with the predicted pose
(R̂, t̂) the same way: for ADD each model point x is compared with itself
under both poses; for ADD-S each predicted point is compared with the
nearest ground-truth point.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from keyvote3d.constants import DEFAULT_DIAMETER_FRACTION, PAIRWISE_BLOCK_ELEMENTS
from keyvote3d.errors import InsufficientPoints
from keyvote3d.models.geometry import PointCloud, RigidTransform
from keyvote3d.models.schemas import EvalReport, InstanceResult, MetricKind
from keyvote3d.services.geometry import model_diameter
from keyvote3d.services.pose_fit import rotation_error_deg, translation_error

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalInstance:
    model: PointCloud
    gt: RigidTransform
    pred: RigidTransform
    symmetric: bool = False
    label: Optional[str] = None


def add_metric(model: PointCloud, gt: RigidTransform, pred: RigidTransform) -> float:
    """Mean distance between gt- and pred-transformed copies of each model point, meters."""
    if model.count < 1:
        raise InsufficientPoints("ADD needs at least one model point")
    diff = gt.apply(model.points) - pred.apply(model.points)
    return float(np.linalg.norm(diff, axis=1).mean())


def _nearest_distances(queries: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Exhaustive nearest-target distance per query, in bounded row blocks."""
    rows = max(1, PAIRWISE_BLOCK_ELEMENTS // max(targets.shape[0], 1))
    out = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], rows):
        out[start:start + rows] = cdist(queries[start:start + rows], targets).min(axis=1)
    return out


def adds_metric(model: PointCloud, gt: RigidTransform, pred: RigidTransform, use_kdtree: bool = False) -> float:
    """Mean distance from each pred-transformed point to the closest gt-transformed point, meters."""
    if model.count < 1:
        raise InsufficientPoints("ADD-S needs at least one model point")
    gt_points = gt.apply(model.points)
    pred_points = pred.apply(model.points)
    if use_kdtree:
        dist, _ = cKDTree(gt_points).query(pred_points, k=1)
    else:
        dist = _nearest_distances(pred_points, gt_points)
    return float(np.mean(dist))


def evaluate(instances: Sequence[EvalInstance], diameter_fraction: float = DEFAULT_DIAMETER_FRACTION) -> EvalReport:
    """ADD (or ADD-S for symmetric instances) against diameter_fraction × diameter, strict <."""
    if diameter_fraction <= 0:
        raise ValueError("diameter_fraction must be positive")

    diameters: Dict[int, float] = {}
    results: List[InstanceResult] = []
    by_label: Dict[str, List[bool]] = defaultdict(list)

    for inst in instances:
        key = id(inst.model)
        if key not in diameters:
            diameters[key] = model_diameter(inst.model)
        threshold = diameter_fraction * diameters[key]

        if inst.symmetric:
            kind, distance = MetricKind.ADD_S, adds_metric(inst.model, inst.gt, inst.pred)
        else:
            kind, distance = MetricKind.ADD, add_metric(inst.model, inst.gt, inst.pred)

        passed = distance < threshold
        results.append(InstanceResult(
            add_distance=distance,
            metric_kind=kind,
            threshold=threshold,
            passed=passed,
            label=inst.label,
            rotation_error_deg=rotation_error_deg(inst.gt, inst.pred),
            translation_error=translation_error(inst.gt, inst.pred),
        ))
        if inst.label is not None:
            by_label[inst.label].append(passed)

    if results:
        accuracy = sum(r.passed for r in results) / len(results)
    else:
        logger.warning("⚠️ evaluate called with no instances, reporting accuracy 0")
        accuracy = 0.0

    per_label = {label: sum(flags) / len(flags) for label, flags in sorted(by_label.items())}
    label_average = float(np.mean(list(per_label.values()))) if per_label else None

    return EvalReport(
        per_instance=results,
        accuracy=accuracy,
        threshold_fraction=diameter_fraction,
        per_label_accuracy=per_label,
        label_average=label_average,
    )
