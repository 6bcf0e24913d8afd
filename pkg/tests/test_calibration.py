import logging
import math

import numpy as np
import pytest

from replab.arm import ArmModel, command_position
from replab.benchmark import perturb_camera
from replab.calibration import (
    CalibrationModel,
    Correspondence,
    NoiseModel,
    align_cell_camera,
    calibration_error,
    compensate,
    fit_noise_model,
    floor_grid,
    solve_calibration,
    synthesize_correspondences,
)
from replab.camera import CameraIntrinsics, default_camera_pose, render
from replab.constants import Workspace
from replab.exceptions import AlignmentFailedError, DegenerateInputError, InvalidModelError, ReachabilityError
from replab.geometry import RigidTransform, Seed, Vec3
from replab.scene import reference_scene


def _pairs(cam: np.ndarray, arm: np.ndarray):
    return [Correspondence(Vec3.from_array(c, "camera"), Vec3.from_array(a)) for c, a in zip(cam, arm)]


class TestSolveCalibration:
    def test_recovers_exact_affine_map(self):
        gen = np.random.default_rng(0)
        truth = gen.normal(size=(3, 4))
        cam = gen.uniform(-20.0, 20.0, size=(12, 3))
        arm = cam @ truth[:, :3].T + truth[:, 3]
        model = solve_calibration(_pairs(cam, arm))
        np.testing.assert_allclose(model.matrix, truth, atol=1e-9)
        assert model.residual < 1e-9

    def test_needs_four_pairs(self):
        cam = np.eye(3)
        with pytest.raises(DegenerateInputError):
            solve_calibration(_pairs(cam, cam))

    def test_rejects_coplanar_points(self):
        gen = np.random.default_rng(1)
        cam = np.column_stack([gen.uniform(-5, 5, 10), gen.uniform(-5, 5, 10), np.full(10, 40.0)])
        with pytest.raises(DegenerateInputError):
            solve_calibration(_pairs(cam, cam))

    def test_noisy_fit_residual(self):
        gen = np.random.default_rng(2)
        cam = gen.uniform(-20.0, 20.0, size=(200, 3))
        arm = cam + gen.normal(scale=0.5, size=cam.shape)
        model = solve_calibration(_pairs(cam, arm))
        assert 0.6 < model.residual < 1.0

    def test_held_out_error_on_simulated_touches(self):
        pose, k = default_camera_pose(), CameraIntrinsics()
        model = solve_calibration(synthesize_correspondences(pose, k, 25, Seed(0)))
        error = calibration_error(model, synthesize_correspondences(pose, k, 200, Seed(1)))
        assert 0.4 < error < 1.5


class TestCalibrationError:
    def test_perfect_model(self):
        cam = np.random.default_rng(3).uniform(-10, 10, size=(5, 3))
        assert calibration_error(CalibrationModel.from_transform(RigidTransform.identity()), _pairs(cam, cam)) == 0.0

    def test_constant_offset(self):
        cam = np.random.default_rng(3).uniform(-10, 10, size=(5, 3))
        shifted = CalibrationModel.from_transform(RigidTransform(np.eye(3), [3.0, 4.0, 0.0]))
        assert calibration_error(shifted, _pairs(cam, cam)) == pytest.approx(5.0)

    def test_empty_pairs(self):
        with pytest.raises(DegenerateInputError):
            calibration_error(CalibrationModel.from_transform(RigidTransform.identity()), [])

    def test_inverse_apply(self):
        t = RigidTransform.from_params([1.0, 2.0, 30.0, 0.2, -0.1, 0.4])
        model = CalibrationModel.from_transform(t)
        p = np.array([[3.0, -4.0, 50.0]])
        np.testing.assert_allclose(model.inverse_apply(model.apply(p)), p, atol=1e-9)


class TestNoiseModel:
    def test_exact_fit(self):
        targets = floor_grid(5, 5)
        achieved = [Vec3(0.9 * p.x + 0.5, 0.9 * p.y + 0.5, p.z) for p in targets]
        nm = fit_noise_model(targets, achieved)
        assert nm.alpha == pytest.approx(0.9, abs=1e-9)
        assert nm.beta == pytest.approx(0.5, abs=1e-9)
        assert not nm.per_axis

    def test_per_axis_fit(self):
        targets = floor_grid(5, 5)
        achieved = [Vec3(0.9 * p.x, 1.1 * p.y - 0.2, p.z) for p in targets]
        nm = fit_noise_model(targets, achieved, per_axis=True)
        assert nm.per_axis
        assert nm.axis(0) == pytest.approx((0.9, 0.0), abs=1e-9)
        assert nm.axis(1) == pytest.approx((1.1, -0.2), abs=1e-9)

    def test_fit_recovers_controller_gain(self):
        arm = ArmModel()
        controller = NoiseModel(0.87, 0.0)
        gen = Seed(11).stream("controller-noise")
        targets = floor_grid(5, 5, z=1.3) * 20
        achieved = [command_position(arm, controller, p, 0.0, gen) for p in targets]
        nm = fit_noise_model(targets, achieved)
        assert 0.85 < nm.alpha < 0.89

    def test_identical_targets_are_degenerate(self):
        targets = [Vec3(1.0, 1.0, 0.0)] * 5
        with pytest.raises(DegenerateInputError):
            fit_noise_model(targets, targets)

    def test_gain_outside_sanity_band_warns(self, caplog):
        with caplog.at_level(logging.WARNING, logger="replab.calibration"):
            NoiseModel(0.3, 0.0)
        assert "sanity band" in caplog.text

    def test_compensate_inverts_distortion(self):
        p = compensate(NoiseModel(0.87, 0.0), Vec3(8.7, -4.35, 2.0))
        assert (p.x, p.y, p.z) == pytest.approx((10.0, -5.0, 2.0))

    def test_compensate_rejects_tiny_gain(self):
        with pytest.raises(InvalidModelError):
            compensate(NoiseModel(0.05, 0.0), Vec3(1.0, 1.0, 1.0))

    def test_compensated_positioning_error(self):
        arm = ArmModel()
        controller = NoiseModel(0.87, 0.0)
        gen = Seed(5).stream("controller-noise")
        nm = fit_noise_model(
            floor_grid(5, 5, z=1.3), [command_position(arm, controller, p, 0.0, gen) for p in floor_grid(5, 5, z=1.3)]
        )
        sample = np.random.default_rng(6)
        errors, centre = [], []
        for _ in range(500):
            target = Vec3(
                sample.uniform(Workspace.X_MIN, Workspace.X_MAX),
                sample.uniform(Workspace.Y_MIN, Workspace.Y_MAX),
                sample.uniform(0.3, 5.0),
            )
            try:
                landed = command_position(arm, controller, compensate(nm, target), 0.0, gen)
            except ReachabilityError:
                continue
            errors.append(landed.distance_to(target))
            if math.hypot(target.x, target.y) < 10.0:
                centre.append(math.hypot(landed.x - target.x, landed.y - target.y))
        assert len(errors) >= 400
        assert np.mean(errors) < 2.0
        assert np.mean(centre) < 1.0


class TestAlignment:
    K = CameraIntrinsics().scaled(0.5)

    def _reference(self):
        _, cloud = render(reference_scene(), default_camera_pose(), self.K, 0, noise_sigma=0.0)
        return cloud

    def test_identical_pose_needs_no_iterations(self):
        result = align_cell_camera(self._reference(), default_camera_pose(), self.K)
        assert result.iterations == 0
        assert result.discrepancy < 0.01

    def test_failure_reports_final_discrepancy(self):
        shifted = RigidTransform(default_camera_pose().rotation, default_camera_pose().translation + [0, 0, 3.0])
        with pytest.raises(AlignmentFailedError) as info:
            align_cell_camera(self._reference(), shifted, self.K, max_iterations=0)
        assert info.value.discrepancy >= 0.3
        assert info.value.pose is not None

    def test_polish_is_skipped_when_refinement_is_off(self):
        nominal = default_camera_pose()
        mounted = perturb_camera(nominal, 0.05, 0.0, Seed(3))
        coarse = align_cell_camera(self._reference(), mounted, self.K, refine_evaluations=0)
        fine = align_cell_camera(self._reference(), mounted, self.K)
        assert coarse.iterations == fine.iterations == 0
        assert fine.discrepancy <= coarse.discrepancy
        assert len(coarse.history) == 1

    @pytest.mark.slow
    def test_recovers_perturbed_mount(self):
        nominal = default_camera_pose()
        mounted = perturb_camera(nominal, 1.0, 2.0, Seed(2))
        result = align_cell_camera(self._reference(), mounted, self.K)
        assert result.discrepancy < 0.3
        assert result.history == sorted(result.history, reverse=True)
        before = np.linalg.norm(mounted.translation - nominal.translation)
        after = np.linalg.norm(result.pose.translation - nominal.translation)
        assert after <= 0.2
        assert after < before
