import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal
from pydantic import ValidationError
from scipy.spatial.transform import Rotation

from keyvote3d.errors import DegenerateScene
from keyvote3d.models.geometry import PointCloud
from keyvote3d.models.schemas import PoseSampling, SweepSpec, SynthConfig, VotingConfig
from keyvote3d.services.geometry import model_centroid
from keyvote3d.services.pose_fit import fit_from_votes
from keyvote3d.services.synth import (
    benchmark_sweep,
    centroid_baseline_accuracy,
    generate,
    model_keypoints_with_center,
    sample_box_surface,
    sample_pose,
    sample_rotations,
)
from keyvote3d.services.voting import vote_all_keypoints


def is_member(points: np.ndarray, cloud: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    d = np.linalg.norm(points[:, None, :] - cloud[None, :, :], axis=2)
    return d.min(axis=1) < tol


class TestSamplePose:
    def test_deterministic(self):
        a = sample_pose(PoseSampling.UNIFORM_ROTATION, 42)
        b = sample_pose(PoseSampling.UNIFORM_ROTATION, 42)
        assert_array_equal(a.rotation, b.rotation)
        assert_array_equal(a.translation, b.translation)

    def test_translation_box(self):
        for seed in range(200):
            t = sample_pose(PoseSampling.UNIFORM_ROTATION, seed).translation
            assert np.all(np.abs(t[:2]) <= 0.2)
            assert 0.8 <= t[2] <= 1.2

    def test_uniform_rotation_mean_vanishes(self):
        rotations = sample_rotations(PoseSampling.UNIFORM_ROTATION, 100_000, rng_seed=0)
        assert np.max(np.abs(rotations.mean(axis=0))) < 0.01

    def test_small_angle_bound(self):
        rotations = sample_rotations(PoseSampling.SMALL_ANGLE, 5000, rng_seed=1)
        angles = np.degrees(Rotation.from_matrix(rotations).magnitude())
        assert angles.max() <= 15.0 + 1e-9
        assert angles.max() > 14.0


class TestBoxSurface:
    def test_points_on_faces(self):
        ext = np.array([0.10, 0.06, 0.04])
        pts = sample_box_surface(3000, extents=ext, rng_seed=5).points
        on_face = np.isclose(np.abs(pts), ext / 2, atol=1e-15).any(axis=1)
        assert on_face.all()
        assert np.all(np.abs(pts) <= ext / 2 + 1e-15)

    def test_deterministic(self):
        assert_array_equal(sample_box_surface(100, rng_seed=2).points, sample_box_surface(100, rng_seed=2).points)

    def test_invalid(self):
        with pytest.raises(ValueError):
            sample_box_surface(0)
        with pytest.raises(ValueError):
            sample_box_surface(10, extents=(0.1, 0.0, 0.1))


class TestModelKeypoints:
    def test_center_is_last(self, box_model):
        kp = model_keypoints_with_center(box_model, 9)
        assert kp.k == 9
        assert_array_equal(kp.keypoints[-1], model_centroid(box_model))
        assert is_member(kp.keypoints[:-1], box_model.points).all()

    def test_center_only(self, box_model):
        kp = model_keypoints_with_center(box_model, 1)
        assert_array_equal(kp.keypoints, model_centroid(box_model)[None, :])


class TestGenerate:
    def test_exact_scene_round_trips_pose(self, box_model):
        for seed in range(20):
            scene = generate(box_model, SynthConfig(rng_seed=seed))
            pose = fit_from_votes(vote_all_keypoints(scene.field, VotingConfig(rng_seed=seed)), scene.model_kp)
            assert np.linalg.norm(pose.rotation - scene.gt_pose.rotation) < 1e-6
            assert np.linalg.norm(pose.translation - scene.gt_pose.translation) < 1e-6

    def test_scene_matches_config(self, box_model):
        scene = generate(box_model, SynthConfig(rng_seed=3))
        assert scene.scene_points.count == 500
        assert scene.field.k == 9
        assert_array_equal(scene.field.scene_points.points, scene.scene_points.points)
        model_frame = scene.gt_pose.inverse().apply(scene.scene_points.points)
        assert is_member(model_frame, box_model.points).all()

    def test_deterministic(self, box_model):
        cfg = SynthConfig(angular_noise_deg=5.0, outlier_fraction=0.3, occlusion_fraction=0.4, rng_seed=9)
        a, b = generate(box_model, cfg), generate(box_model, cfg)
        assert_array_equal(a.field.vectors, b.field.vectors)
        assert_array_equal(a.scene_points.points, b.scene_points.points)

    def test_half_occlusion(self, box_model):
        scene = generate(box_model, SynthConfig(occlusion_fraction=0.5, rng_seed=4))
        pts = scene.scene_points.points
        assert scene.scene_points.count == 500
        assert len(np.unique(pts, axis=0)) == 500

    def test_occlusion_is_contiguous(self, box_model):
        # The hidden half lies beyond a plane: the visible points' centroid moves away from the model center
        scene = generate(box_model, SynthConfig(occlusion_fraction=0.5, rng_seed=11))
        model_frame = scene.gt_pose.inverse().apply(scene.scene_points.points)
        assert np.linalg.norm(model_frame.mean(axis=0) - model_centroid(box_model)) > 0.005

    def test_heavy_occlusion_keeps_point_count(self, box_model):
        scene = generate(box_model, SynthConfig(occlusion_fraction=0.9, rng_seed=2))
        assert scene.scene_points.count == 500

    def test_too_few_visible_points(self):
        tetra = PointCloud(points=[[0, 0, 0], [0.1, 0, 0], [0, 0.1, 0], [0, 0, 0.1]])
        with pytest.raises(DegenerateScene):
            generate(tetra, SynthConfig(k_keypoints=1, occlusion_fraction=0.5))

    def test_reused_keypoints_must_match(self, box_model):
        kp = model_keypoints_with_center(box_model, 5)
        with pytest.raises(ValueError):
            generate(box_model, SynthConfig(k_keypoints=9), model_kp=kp)


class TestBenchmarkSweep:
    def test_zero_corruption_is_perfect(self, box_model):
        rows = benchmark_sweep(box_model, [SynthConfig(n_points=200)], trials=5, diameter_fraction=1e-4)
        [row] = rows
        assert row.accuracy == 1.0
        assert row.failures == 0
        assert row.mean_add < 1e-6
        assert row.mean_runtime > 0

    def test_serial_matches_threaded(self, box_model):
        grid = [SynthConfig(n_points=200, angular_noise_deg=5.0, outlier_fraction=0.3, rng_seed=s) for s in (0, 1)]
        serial = benchmark_sweep(box_model, grid, trials=4, threads=1)
        threaded = benchmark_sweep(box_model, grid, trials=4, threads=4)
        for a, b in zip(serial, threaded):
            assert a.accuracy == b.accuracy
            assert a.mean_add == b.mean_add
            assert a.failures == b.failures

    def test_outliers_degrade_accuracy(self, box_model):
        grid = [SynthConfig(angular_noise_deg=2.0, outlier_fraction=f) for f in (0.0, 0.8)]
        clean, dirty = benchmark_sweep(box_model, grid, trials=20, voting=VotingConfig(m_hypotheses=64))
        assert clean.accuracy >= dirty.accuracy
        assert clean.mean_add < dirty.mean_add

    def test_noise_and_outliers_within_two_percent(self, box_model):
        cell = SynthConfig(angular_noise_deg=5.0, outlier_fraction=0.3, occlusion_fraction=0.0)
        [row] = benchmark_sweep(box_model, [cell], trials=60, diameter_fraction=0.02)
        assert row.failures == 0
        assert row.accuracy >= 0.95

    def test_occluded_outlier_sweep_degrades_gracefully(self, box_model):
        sweep = SweepSpec(
            base=SynthConfig(angular_noise_deg=5.0, occlusion_fraction=0.5),
            axes={"outlier_fraction": [0.0, 0.2, 0.4, 0.6]},
        )
        rows = benchmark_sweep(box_model, sweep.expand_grid(), trials=40)
        assert [r.config.outlier_fraction for r in rows] == [0.0, 0.2, 0.4, 0.6]
        for cleaner, dirtier in zip(rows, rows[1:]):
            assert dirtier.accuracy <= cleaner.accuracy + 0.01
        assert rows[-1].mean_add > rows[0].mean_add
        baseline = centroid_baseline_accuracy(box_model, sweep.expand_grid()[0], trials=40)
        assert min(r.accuracy for r in rows) > baseline

    def test_baseline_rarely_passes(self, box_model):
        assert centroid_baseline_accuracy(box_model, SynthConfig(), trials=20) < 0.5
        with pytest.raises(ValueError):
            centroid_baseline_accuracy(box_model, SynthConfig(), trials=0)

    def test_failures_are_counted(self, box_model):
        [row] = benchmark_sweep(box_model, [SynthConfig(n_points=2)], trials=3)
        assert row.failures == 3
        assert row.accuracy == 0.0
        assert math.isnan(row.mean_add)

    def test_invalid_trials(self, box_model):
        with pytest.raises(ValueError):
            benchmark_sweep(box_model, [SynthConfig()], trials=0)


class TestSweepSpec:
    def test_expand_axes(self):
        spec = SweepSpec(
            base=SynthConfig(n_points=300),
            axes={"outlier_fraction": [0.0, 0.2], "angular_noise_deg": [0.0, 5.0]},
        )
        grid = spec.expand_grid()
        assert len(grid) == 4
        assert {(c.outlier_fraction, c.angular_noise_deg) for c in grid} == {
            (0.0, 0.0), (0.0, 5.0), (0.2, 0.0), (0.2, 5.0),
        }
        assert all(c.n_points == 300 for c in grid)

    def test_explicit_grid_kept_first(self):
        spec = SweepSpec(grid=[SynthConfig(rng_seed=7)], axes={"occlusion_fraction": [0.5]})
        grid = spec.expand_grid()
        assert grid[0].rng_seed == 7
        assert grid[1].occlusion_fraction == 0.5

    def test_unknown_axis(self):
        with pytest.raises(ValidationError):
            SweepSpec(axes={"noise": [1.0]})

    def test_empty_spec(self):
        with pytest.raises(ValidationError):
            SweepSpec()

    def test_axis_values_validated(self):
        with pytest.raises(ValidationError):
            SweepSpec(axes={"occlusion_fraction": [1.0]}).expand_grid()
