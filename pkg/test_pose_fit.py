import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from conftest import random_transform, rotation_residual
from keyvote3d.errors import AllZeroConfidence, DegenerateCorrespondences, InsufficientWeight, ShapeMismatch
from keyvote3d.models.geometry import Correspondences, KeypointEstimate, ModelKeypoints, PointCloud, RigidTransform
from keyvote3d.services.geometry import apply_transform, compose
from keyvote3d.services.pose_fit import (
    fit_from_votes,
    icp_refine,
    rotation_error_deg,
    translation_error,
    weighted_rigid_fit,
)


def objective(t: RigidTransform, model: np.ndarray, scene: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum(w * np.sum((t.apply(model) - scene) ** 2, axis=1)))


def assert_proper_rotation(r: np.ndarray) -> None:
    assert rotation_residual(r) < 1e-9
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-9)


def fit(model, scene, weights=None) -> RigidTransform:
    w = np.ones(len(model)) if weights is None else weights
    return weighted_rigid_fit(Correspondences(model_points=model, scene_points=scene, weights=w))


class TestWeightedRigidFit:
    def test_identity(self, rng):
        pts = rng.normal(size=(9, 3))
        t = fit(pts, pts)
        assert_allclose(t.rotation, np.eye(3), atol=1e-9)
        assert_allclose(t.translation, np.zeros(3), atol=1e-9)

    def test_recovers_known_transform(self, rng):
        for _ in range(50):
            pts = rng.normal(size=(6, 3))
            truth = random_transform(rng)
            t = fit(pts, truth.apply(pts), rng.uniform(0.1, 5.0, size=6))
            assert_allclose(t.rotation, truth.rotation, atol=1e-9)
            assert_allclose(t.translation, truth.translation, atol=1e-9)
            assert_proper_rotation(t.rotation)

    def test_random_perturbation_optimality(self, rng):
        for _ in range(200):
            model = rng.normal(scale=0.05, size=(9, 3))
            truth = random_transform(rng)
            scene = truth.apply(model) + rng.normal(scale=0.001, size=(9, 3))
            w = rng.integers(1, 500, size=9).astype(float)
            best = fit(model, scene, w)
            assert_proper_rotation(best.rotation)
            best_value = objective(best, model, scene, w)

            rot_noise = Rotation.from_rotvec(rng.normal(scale=0.01, size=(1000, 3))).as_matrix()
            trial_r = rot_noise @ best.rotation  # (1000, 3, 3)
            trial_t = best.translation + rng.normal(scale=0.001, size=(1000, 3))
            moved = np.einsum("pij,kj->pki", trial_r, model) + trial_t[:, None, :]
            trial_values = np.sum(w * np.sum((moved - scene) ** 2, axis=2), axis=1)
            assert np.all(best_value <= trial_values + 1e-15)

    def test_zero_weight_outlier_ignored(self, rng):
        model = rng.normal(size=(6, 3))
        scene = random_transform(rng).apply(model) + rng.normal(scale=0.01, size=(6, 3))
        wild_scene = np.vstack([scene, [[50.0, -80.0, 3.0]]])
        wild_model = np.vstack([model, [[0.3, 0.2, 0.1]]])
        with_zero = fit(wild_model, wild_scene, np.r_[np.ones(6), 0.0])
        without = fit(model, scene)
        assert_allclose(with_zero.rotation, without.rotation, atol=1e-12)
        assert_allclose(with_zero.translation, without.translation, atol=1e-12)

    def test_weight_scale_invariance(self, rng):
        model = rng.normal(size=(7, 3))
        scene = random_transform(rng).apply(model) + rng.normal(scale=0.01, size=(7, 3))
        w = rng.uniform(0.5, 2.0, size=7)
        a, b = fit(model, scene, w), fit(model, scene, 1000.0 * w)
        assert_allclose(a.rotation, b.rotation, atol=1e-12)
        assert_allclose(a.translation, b.translation, atol=1e-12)

    def test_left_equivariance(self, rng):
        model = rng.normal(size=(8, 3))
        scene = random_transform(rng).apply(model) + rng.normal(scale=0.01, size=(8, 3))
        t = random_transform(rng)
        moved = fit(model, t.apply(scene))
        expected = compose(t, fit(model, scene))
        assert_allclose(moved.rotation, expected.rotation, atol=1e-9)
        assert_allclose(moved.translation, expected.translation, atol=1e-9)

    def test_reflection_guard(self, rng):
        # Mirrored scene: best proper rotation still has det +1
        model = rng.normal(size=(8, 3))
        scene = model * np.array([1.0, 1.0, -1.0])
        assert_proper_rotation(fit(model, scene).rotation)

    def test_collinear_model(self):
        model = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], dtype=float)
        with pytest.raises(DegenerateCorrespondences):
            fit(model, model + 1.0)

    def test_fewer_than_three_positive_weights(self, rng):
        pts = rng.normal(size=(5, 3))
        with pytest.raises(InsufficientWeight):
            fit(pts, pts, np.array([1.0, 1.0, 0.0, 0.0, 0.0]))


class TestFitFromVotes:
    def test_exact_keypoints(self, rng):
        kp = ModelKeypoints(keypoints=rng.normal(scale=0.05, size=(9, 3)))
        truth = random_transform(rng)
        estimates = [KeypointEstimate(position=p, confidence=500) for p in truth.apply(kp.keypoints)]
        pose = fit_from_votes(estimates, kp)
        assert np.linalg.norm(pose.rotation - truth.rotation) < 1e-6
        assert np.linalg.norm(pose.translation - truth.translation) < 1e-6

    def test_equal_confidences_match_unweighted(self, rng):
        kp = ModelKeypoints(keypoints=rng.normal(size=(9, 3)))
        scene = random_transform(rng).apply(kp.keypoints) + rng.normal(scale=0.01, size=(9, 3))
        pose = fit_from_votes([KeypointEstimate(position=p, confidence=37) for p in scene], kp)
        ref = fit(kp.keypoints, scene)
        assert_allclose(pose.rotation, ref.rotation, atol=1e-12)
        assert_allclose(pose.translation, ref.translation, atol=1e-12)

    def test_zero_confidence_corruption_ignored(self, rng):
        kp = ModelKeypoints(keypoints=rng.normal(size=(9, 3)))
        scene = random_transform(rng).apply(kp.keypoints)
        clean = [KeypointEstimate(position=p, confidence=int(c)) for p, c in zip(scene, rng.integers(50, 500, 9))]
        corrupted = list(clean)
        corrupted[4] = KeypointEstimate(position=[9.0, 9.0, 9.0], confidence=0)
        clean[4] = KeypointEstimate(position=clean[4].position, confidence=0)
        a, b = fit_from_votes(clean, kp), fit_from_votes(corrupted, kp)
        assert_allclose(a.rotation, b.rotation, atol=1e-12)
        assert_allclose(a.translation, b.translation, atol=1e-12)

    def test_all_zero(self, rng):
        kp = ModelKeypoints(keypoints=rng.normal(size=(4, 3)))
        with pytest.raises(AllZeroConfidence):
            fit_from_votes([KeypointEstimate(position=p, confidence=0) for p in kp.keypoints], kp)

    def test_length_mismatch(self, rng):
        kp = ModelKeypoints(keypoints=rng.normal(size=(4, 3)))
        with pytest.raises(ShapeMismatch):
            fit_from_votes([KeypointEstimate(position=p, confidence=1) for p in kp.keypoints[:3]], kp)


class TestIcp:
    @pytest.fixture
    def posed(self, grid_model, rng):
        truth = random_transform(rng, max_translation=0.2)
        return truth, apply_transform(truth, grid_model)

    def test_fixed_point(self, grid_model, posed):
        truth, scene = posed
        result = icp_refine(truth, scene, grid_model, iters=10, max_corr_dist=0.01)
        assert_allclose(result.pose.rotation, truth.rotation, atol=1e-9)
        assert_allclose(result.pose.translation, truth.translation, atol=1e-9)
        assert result.converged

    def test_recovers_small_offset(self, grid_model, posed):
        truth, scene = posed
        start = RigidTransform(rotation=truth.rotation, translation=truth.translation + [0.003, -0.003, 0.0025])
        result = icp_refine(start, scene, grid_model, iters=10, max_corr_dist=0.01)
        assert np.linalg.norm(result.pose.translation - truth.translation) < 1e-6
        assert rotation_error_deg(truth, result.pose) < 1e-4
        assert result.objective <= result.initial_objective

    def test_objective_never_increases(self, box_model, rng):
        truth = random_transform(rng, max_translation=0.2)
        scene = apply_transform(truth, box_model)
        noise = Rotation.from_rotvec([0.02, -0.01, 0.015]).as_matrix()
        start = RigidTransform(rotation=noise @ truth.rotation, translation=truth.translation + 0.004)
        result = icp_refine(start, scene, box_model, iters=20, max_corr_dist=0.02)
        assert result.iterations >= 1
        assert result.objective <= result.initial_objective

    def test_no_correspondences(self, grid_model, posed):
        truth, scene = posed
        start = RigidTransform(rotation=truth.rotation, translation=truth.translation + 0.005)
        result = icp_refine(start, scene, grid_model, iters=10, max_corr_dist=0.0)
        assert result.no_correspondences
        assert result.iterations == 0
        assert_allclose(result.pose.translation, start.translation)

    def test_empty_scene(self, grid_model):
        with pytest.raises(ValueError):
            icp_refine(RigidTransform.identity(), PointCloud(points=[]), grid_model, 10, 0.01)


class TestErrors:
    def test_rotation_error(self):
        a = RigidTransform.identity()
        b = RigidTransform(rotation=Rotation.from_rotvec([0, 0, np.radians(30.0)]).as_matrix(), translation=[0, 0, 0])
        assert rotation_error_deg(a, b) == pytest.approx(30.0, abs=1e-9)

    def test_translation_error(self):
        a = RigidTransform.identity()
        b = RigidTransform(rotation=np.eye(3), translation=[0.003, 0.004, 0.0])
        assert translation_error(a, b) == pytest.approx(0.005, abs=1e-15)
