import math

import numpy as np
import pytest

from replab.arm import ArmModel, JointState, command_position, fk, ik_vertical, step_velocity, tool_pitch
from replab.calibration import NoiseModel
from replab.constants import Workspace
from replab.exceptions import InvalidArgumentError, ReachabilityError
from replab.geometry import Seed, Vec3

ARM = ArmModel()


class TestForwardKinematics:
    def test_zero_pose_stretches_along_x(self):
        tip, roll = fk(ARM, JointState())
        assert (tip.x, tip.y, tip.z) == pytest.approx((41.0, 0.0, 22.0))
        assert roll == 0.0

    def test_base_yaw_mirrors_the_arm(self):
        tip, _ = fk(ARM, JointState(base_yaw=math.pi))
        assert (tip.x, tip.y, tip.z) == pytest.approx((-41.0, 0.0, 22.0), abs=1e-9)


class TestInverseKinematics:
    def test_point_under_the_base(self):
        js = ik_vertical(ARM, Vec3(0.0, 0.0, 5.0), 0.0)
        assert js.base_yaw == 0.0
        tip, _ = fk(ARM, js)
        assert (tip.x, tip.y, tip.z) == pytest.approx((0.0, 0.0, 5.0), abs=1e-9)

    def test_round_trip_over_the_workspace(self):
        gen = np.random.default_rng(0)
        for _ in range(500):
            target = Vec3(
                gen.uniform(Workspace.X_MIN, Workspace.X_MAX),
                gen.uniform(Workspace.Y_MIN, Workspace.Y_MAX),
                gen.uniform(0.3, 8.0),
            )
            theta = gen.uniform(0.0, math.pi)
            js = ik_vertical(ARM, target, theta)
            tip, roll = fk(ARM, js)
            assert tip.distance_to(target) < 1e-6
            assert tool_pitch(js) == pytest.approx(math.pi / 2)
            assert roll == pytest.approx(theta)
            assert js.within(ARM.limits)

    def test_far_target_is_unreachable(self):
        with pytest.raises(ReachabilityError):
            ik_vertical(ARM, Vec3(100.0, 0.0, 0.0), 0.0)

    def test_wrist_above_shoulder_hits_joint_limit(self):
        with pytest.raises(ReachabilityError):
            ik_vertical(ARM, Vec3(0.0, 0.0, 15.0), 0.0)

    def test_default_arm_covers_the_workspace(self):
        assert ARM.covers_workspace()

    def test_short_arm_does_not(self):
        assert not ArmModel(upper_arm=8.0, forearm=8.0).covers_workspace()


class TestCommandPosition:
    def test_ideal_controller_lands_on_target(self):
        arm = ArmModel(servo_noise_xy=0.0, servo_noise_z=0.0)
        landed = command_position(arm, NoiseModel(1.0, 0.0), Vec3(5.0, -3.0, 2.0), 0.0, Seed(0))
        assert (landed.x, landed.y, landed.z) == pytest.approx((5.0, -3.0, 2.0))

    def test_gain_scales_horizontal_position(self):
        arm = ArmModel(servo_noise_xy=0.0, servo_noise_z=0.0)
        landed = command_position(arm, NoiseModel(0.87, 0.0), Vec3(10.0, 0.0, 2.0), 0.0, Seed(0))
        assert landed.x == pytest.approx(8.7)
        assert landed.z == pytest.approx(2.0)

    def test_servo_noise_is_seeded(self):
        nm = NoiseModel(0.87, 0.0)
        a = command_position(ARM, nm, Vec3(5.0, 5.0, 2.0), 0.0, Seed(4))
        b = command_position(ARM, nm, Vec3(5.0, 5.0, 2.0), 0.0, Seed(4))
        assert a == b


class TestStepVelocity:
    def test_zero_velocity_keeps_state(self):
        js = ik_vertical(ARM, Vec3(5.0, 5.0, 3.0), 0.3)
        assert step_velocity(ARM, js, np.zeros(6), 0.05) == js

    def test_opposite_steps_cancel(self):
        js = ik_vertical(ARM, Vec3(5.0, 5.0, 3.0), 0.3)
        v = np.array([0.2, -0.3, 0.1, 0.4, -0.5, 0.0])
        back = step_velocity(ARM, step_velocity(ARM, js, v, 0.05), -v, 0.05)
        np.testing.assert_allclose(back.as_array(), js.as_array(), atol=1e-12)

    def test_joint_limits_clamp(self):
        js = JointState(shoulder=1.5)
        out = step_velocity(ARM, js, [0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 1.0)
        assert out.shoulder == pytest.approx(math.pi / 2)

    def test_velocity_is_bounded(self):
        out = step_velocity(ARM, JointState(), [5.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.1)
        assert out.base_yaw == pytest.approx(0.1)

    def test_time_step_must_be_positive(self):
        with pytest.raises(InvalidArgumentError):
            step_velocity(ARM, JointState(), np.zeros(6), 0.0)
