"""Arm - kinematics of the ceiling-mounted 6-DOF arm and its noisy position controller.

Angles follow the arm's vertical plane: the shoulder, elbow and wrist-pitch
angles accumulate into link headings measured downward from horizontal, so
the tool points straight down when the three sum to pi/2.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence, Tuple

import numpy as np

from .constants import GripperDefaults, MESSAGES, ReachSettings, Workspace
from .exceptions import InvalidArgumentError, ReachabilityError
from .geometry import RandomSource, Vec3, as_generator, normalize_theta

if TYPE_CHECKING:
    from .calibration import NoiseModel

logger = logging.getLogger(__name__)

DEFAULT_LIMITS: Tuple[Tuple[float, float], ...] = (
    (-math.pi, math.pi),
    (-math.pi / 2, math.pi / 2),
    (-0.5, math.pi),
    (-math.pi, math.pi),
    (-math.pi, math.pi),
    (GripperDefaults.MIN_WIDTH, GripperDefaults.MAX_WIDTH),
)


@dataclass(frozen=True)
class GripperSpec:
    """Parallel-jaw gripper; widths in centimetres."""

    min_width: float = GripperDefaults.MIN_WIDTH
    max_width: float = GripperDefaults.MAX_WIDTH
    jaw_length: float = GripperDefaults.JAW_LENGTH
    soft_tolerance: float = GripperDefaults.SOFT_TOLERANCE
    floor_clearance: float = GripperDefaults.FLOOR_CLEARANCE

    def __post_init__(self) -> None:
        if not 0.0 < self.min_width < self.max_width:
            raise InvalidArgumentError(
                f"Gripper needs 0 < min_width < max_width, got {self.min_width}, {self.max_width}",
                module="arm",
            )
        if self.jaw_length <= 0.0:
            raise InvalidArgumentError("Gripper jaw length must be positive", module="arm")


@dataclass(frozen=True)
class JointState:
    """Five joint angles in radians plus the gripper opening in centimetres."""

    base_yaw: float = 0.0
    shoulder: float = 0.0
    elbow: float = 0.0
    wrist_pitch: float = 0.0
    wrist_roll: float = 0.0
    gripper: float = GripperDefaults.MAX_WIDTH

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "JointState":
        return cls(*(float(v) for v in values[:6]))

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.base_yaw, self.shoulder, self.elbow, self.wrist_pitch, self.wrist_roll, self.gripper], dtype=float
        )

    def within(self, limits: Sequence[Tuple[float, float]], tolerance: float = 1e-12) -> bool:
        q = self.as_array()
        return all(lo - tolerance <= v <= hi + tolerance for v, (lo, hi) in zip(q, limits))


@dataclass(frozen=True)
class ArmModel:
    """Link lengths and mount of the suspended arm.

    Lengths are nominal WidowX-like values; the base sits above the workspace
    centre at ``base_z`` with the shoulder on the yaw axis.
    """

    upper_arm: float = 15.0
    forearm: float = 15.0
    tool: float = 11.0
    base_x: float = 0.0
    base_y: float = 0.0
    base_z: float = 22.0
    limits: Tuple[Tuple[float, float], ...] = field(default=DEFAULT_LIMITS)
    max_velocity: float = ReachSettings.MAX_VELOCITY
    servo_noise_xy: float = 0.4
    servo_noise_z: float = 0.2

    def __post_init__(self) -> None:
        if min(self.upper_arm, self.forearm, self.tool) <= 0.0:
            raise InvalidArgumentError("Link lengths must be positive", module="arm")
        if len(self.limits) != 6 or any(lo >= hi for lo, hi in self.limits):
            raise InvalidArgumentError("Joint limits need six (low, high) pairs with low < high", module="arm")
        object.__setattr__(self, "limits", tuple((float(lo), float(hi)) for lo, hi in self.limits))

    @property
    def limit_array(self) -> np.ndarray:
        return np.array(self.limits, dtype=float)

    def covers_workspace(self, heights: Sequence[float] = (GripperDefaults.FLOOR_CLEARANCE, 8.0)) -> bool:
        """Check that the floor corners and centre are reachable with a vertical tool."""
        points = [
            (Workspace.X_MIN, Workspace.Y_MIN),
            (Workspace.X_MIN, Workspace.Y_MAX),
            (Workspace.X_MAX, Workspace.Y_MIN),
            (Workspace.X_MAX, Workspace.Y_MAX),
            (0.5 * (Workspace.X_MIN + Workspace.X_MAX), 0.5 * (Workspace.Y_MIN + Workspace.Y_MAX)),
        ]
        try:
            for x, y in points:
                for z in heights:
                    ik_vertical(self, Vec3(x, y, Workspace.FLOOR_Z + z), 0.0)
        except ReachabilityError:
            return False
        return True


def fk(model: ArmModel, js: JointState) -> Tuple[Vec3, float]:
    """Forward kinematics: end-effector (tool tip) position and wrist roll."""
    ee = fk_batch(model, js.as_array()[None, :])[0]
    return Vec3.from_array(ee), js.wrist_roll


def fk_batch(model: ArmModel, q: np.ndarray) -> np.ndarray:
    """Vectorized forward kinematics over an (N, 6) joint array."""
    q = np.asarray(q, dtype=float)
    yaw = q[:, 0]
    phi1 = q[:, 1]
    phi2 = phi1 + q[:, 2]
    phi3 = phi2 + q[:, 3]
    rho = model.upper_arm * np.cos(phi1) + model.forearm * np.cos(phi2) + model.tool * np.cos(phi3)
    drop = model.upper_arm * np.sin(phi1) + model.forearm * np.sin(phi2) + model.tool * np.sin(phi3)
    return np.column_stack(
        [model.base_x + rho * np.cos(yaw), model.base_y + rho * np.sin(yaw), model.base_z - drop]
    )


def tool_pitch(js: JointState) -> float:
    """Tool heading below horizontal; pi/2 means pointing straight down."""
    return js.shoulder + js.elbow + js.wrist_pitch


def ik_vertical(model: ArmModel, target: Vec3, theta: float, gripper: float = GripperDefaults.MAX_WIDTH) -> JointState:
    """Closed-form inverse kinematics with the tool held vertical.

    Base yaw comes from the target bearing, shoulder and elbow from a planar
    two-link solve on the wrist point, and the wrist pitch cancels their sum.
    The elbow angle is taken non-negative. ``wrist_roll`` is set to the jaw
    heading ``theta``.

    Raises:
        ReachabilityError: If the target is out of reach or needs a joint beyond its limit.
    """
    dx = target.x - model.base_x
    dy = target.y - model.base_y
    rho = math.hypot(dx, dy)
    yaw = math.atan2(dy, dx) if rho > 1e-12 else 0.0

    wrist_drop = model.base_z - (target.z + model.tool)
    l1, l2 = model.upper_arm, model.forearm
    c2 = (rho * rho + wrist_drop * wrist_drop - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if c2 > 1.0 + 1e-12 or c2 < -1.0 - 1e-12:
        raise ReachabilityError(MESSAGES["UNREACHABLE"].format(x=target.x, y=target.y, z=target.z))
    elbow = math.acos(min(1.0, max(-1.0, c2)))
    shoulder = math.atan2(wrist_drop, rho) - math.atan2(l2 * math.sin(elbow), l1 + l2 * math.cos(elbow))
    wrist_pitch = math.pi / 2 - shoulder - elbow

    js = JointState(yaw, shoulder, elbow, wrist_pitch, normalize_theta(theta), gripper)
    if not js.within(model.limits):
        raise ReachabilityError(
            MESSAGES["UNREACHABLE"].format(x=target.x, y=target.y, z=target.z) + " (joint limit)"
        )
    return js


def command_position(
    model: ArmModel,
    noise: "NoiseModel",
    target: Vec3,
    theta: float,
    rng: RandomSource,
) -> Vec3:
    """Send the arm to ``target`` and return where the tool actually ends up.

    The controller applies the affine horizontal distortion of ``noise`` and
    adds Gaussian residual error (``servo_noise_xy`` / ``servo_noise_z``).

    Raises:
        ReachabilityError: As in :func:`ik_vertical`.
    """
    ik_vertical(model, target, theta)
    gen = as_generator(rng, "controller-noise")
    eps = gen.standard_normal(3)
    ax, ay = noise.distort(target.x, target.y)
    return Vec3(
        ax + model.servo_noise_xy * eps[0],
        ay + model.servo_noise_xy * eps[1],
        target.z + model.servo_noise_z * eps[2],
    )


def step_velocity(model: ArmModel, js: JointState, qdot: Sequence[float], dt: float) -> JointState:
    """Clamped Euler step of the six joint velocities."""
    q = step_velocity_batch(model, js.as_array()[None, :], np.asarray(qdot, dtype=float)[None, :], dt)
    return JointState.from_array(q[0])


def step_velocity_batch(model: ArmModel, q: np.ndarray, qdot: np.ndarray, dt: float) -> np.ndarray:
    if dt <= 0.0:
        raise InvalidArgumentError(f"Time step must be positive, got {dt}", module="arm")
    limits = model.limit_array
    v = np.clip(np.asarray(qdot, dtype=float), -model.max_velocity, model.max_velocity)
    return np.clip(np.asarray(q, dtype=float) + v * dt, limits[:, 0], limits[:, 1])
