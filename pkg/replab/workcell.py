"""Workcell - one simulated cell at runtime: calibrate, observe, attempt a grasp."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .arm import command_position
from .calibration import (
    CalibrationModel,
    NoiseModel,
    calibration_error,
    compensate,
    fit_noise_model,
    floor_grid,
    solve_calibration,
    synthesize_correspondences,
)
from .camera import render
from .constants import FailureReason, GripperDefaults, Workspace
from .exceptions import ReachabilityError
from .geometry import GraspPose, RandomSource, Seed, as_generator
from .perception import perceive
from .planners import FeatureContext, Observation
from .records import CameraView
from .scene import GraspOutcome, Scene, execute_grasp
from .services.config_service import CellConfig

logger = logging.getLogger(__name__)

# Calibration touches happen just above the floor
TOUCH_HEIGHT = GripperDefaults.FLOOR_CLEARANCE + 1.0


@dataclass(frozen=True)
class CalibrationReport:
    calibration: CalibrationModel
    noise_model: NoiseModel
    fit_residual: float
    heldout_error: float


def as_seed(source: RandomSource) -> Seed:
    if isinstance(source, Seed):
        return source
    if isinstance(source, np.random.Generator):
        return Seed(int(source.integers(2**63)))
    return Seed(int(source))


def calibrate_cell(cell: CellConfig, seed: RandomSource = 0, per_axis: bool = False) -> CalibrationReport:
    """Run both calibration procedures on a simulated cell.

    Camera-to-arm: simulated marker touches fitted by least squares and
    checked on a second, independent set of touches. Control noise: the arm
    is sent to a 5x5 floor grid and the landing points are fitted.
    """
    root = as_seed(seed)
    pairs = synthesize_correspondences(cell.camera_pose, cell.intrinsics, cell.calibration_pairs, root.child("fit"))
    calib = solve_calibration(pairs)
    heldout = synthesize_correspondences(cell.camera_pose, cell.intrinsics, cell.calibration_pairs, root.child("check"))
    error = calibration_error(calib, heldout)

    grid = floor_grid(5, 5, z=Workspace.FLOOR_Z + TOUCH_HEIGHT)
    gen = root.stream("controller-noise")
    achieved = [command_position(cell.arm, cell.controller, p, 0.0, gen) for p in grid]
    noise = fit_noise_model(grid, achieved, per_axis=per_axis)
    logger.info(f"Cell {cell.cell_id} calibrated: held-out error {error:.3f} cm, alpha {noise.alpha:.4f}")
    return CalibrationReport(calib, noise, calib.residual, error)


class Workcell:
    """Runtime view of a :class:`CellConfig`.

    An uncalibrated config is calibrated on construction. Instances are
    read-only after that and can be shared by worker threads.
    """

    def __init__(self, cell: CellConfig, seed: RandomSource = 0):
        self.report: Optional[CalibrationReport] = None
        if cell.calibration is None or cell.noise_model is None:
            self.report = calibrate_cell(cell, seed)
            cell = cell.with_calibration(self.report.calibration, self.report.noise_model)
        self.cell = cell
        assert cell.calibration is not None and cell.noise_model is not None
        self.calibration: CalibrationModel = cell.calibration
        self.noise_model: NoiseModel = cell.noise_model
        self.view = CameraView(cell.intrinsics, cell.calibration, cell.camera_pose, Workspace.FLOOR_Z)
        self.context = FeatureContext(cell.calibration, cell.intrinsics, self.view.floor_depth())

    def observe(self, scene: Scene, seed: RandomSource) -> Observation:
        """Render the scene and cluster what the camera sees."""
        image, cloud = render(scene, self.cell.camera_pose, self.cell.intrinsics, seed, self.cell.depth_noise)
        targets = perceive(cloud, self.calibration, scene.floor_z, self.cell.eps, self.cell.min_pts)
        return Observation(targets, image, self.context, scene)

    def attempt(
        self, scene: Scene, pose: GraspPose, seed: RandomSource
    ) -> Tuple[GraspOutcome, Optional[GraspPose], Scene]:
        """Command a compensated grasp and report what happened where the tool landed.

        Returns the outcome, the achieved pose (None when the arm could not
        reach the command) and the scene afterwards.
        """
        target = compensate(self.noise_model, pose.position)
        try:
            gen = as_generator(seed, "controller-noise")
            landed = command_position(self.cell.arm, self.cell.controller, target, pose.theta, gen)
        except ReachabilityError as e:
            logger.debug(f"Grasp command unreachable: {e}")
            return GraspOutcome(False, None, FailureReason.COLLISION), None, scene
        achieved = GraspPose(landed.x, landed.y, landed.z, pose.theta)
        outcome, after = execute_grasp(scene, achieved, self.cell.gripper, self.cell.d_slip)
        return outcome, achieved, after
