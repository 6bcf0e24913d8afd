"""Geometry - frames, rigid transforms, 2x2 eigensolves and seeded randomness."""

import math
import zlib
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import InvalidArgumentError

ORTHONORMAL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Vec3:
    """A point or displacement in centimetres, tagged with its frame."""

    x: float
    y: float
    z: float
    frame: str = "robot"

    def __post_init__(self) -> None:
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise InvalidArgumentError(f"Non-finite Vec3 component: ({self.x}, {self.y}, {self.z})", module="geometry")

    @classmethod
    def from_array(cls, values: Sequence[float], frame: str = "robot") -> "Vec3":
        return cls(float(values[0]), float(values[1]), float(values[2]), frame)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def distance_to(self, other: "Vec3") -> float:
        return (self - other).norm()

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z, self.frame)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z, self.frame)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion x -> R x + t.

    A camera pose maps camera-frame coordinates (x right, y down, z along the
    optical axis) into the robot frame.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rotation = np.array(self.rotation, dtype=float).reshape(3, 3)
        translation = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
            raise InvalidArgumentError("RigidTransform has non-finite entries", module="geometry")
        if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > ORTHONORMAL_TOLERANCE:
            raise InvalidArgumentError("Rotation matrix is not orthonormal", module="geometry")
        if abs(np.linalg.det(rotation) - 1.0) > ORTHONORMAL_TOLERANCE:
            raise InvalidArgumentError("Rotation matrix is not a proper rotation (det != +1)", module="geometry")
        rotation.flags.writeable = False
        translation.flags.writeable = False
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rotation(cls, rotation: Rotation, translation: Sequence[float]) -> "RigidTransform":
        return cls(rotation.as_matrix(), np.asarray(translation, dtype=float))

    @classmethod
    def about_z(cls, angle: float, translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = math.cos(angle), math.sin(angle)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), np.asarray(translation, dtype=float))

    @classmethod
    def from_params(cls, params: Sequence[float]) -> "RigidTransform":
        """Build from (tx, ty, tz, rx, ry, rz) with a rotation vector in radians."""
        p = np.asarray(params, dtype=float)
        return cls(Rotation.from_rotvec(p[3:6]).as_matrix(), p[0:3])

    @classmethod
    def look_at(
        cls,
        eye: Sequence[float],
        target: Sequence[float],
        up: Sequence[float] = (0.0, 0.0, 1.0),
    ) -> "RigidTransform":
        """Camera pose at ``eye`` whose optical axis points at ``target``.

        Raises:
            InvalidArgumentError: If the viewing direction is parallel to ``up``.
        """
        eye_arr = np.asarray(eye, dtype=float)
        forward = np.asarray(target, dtype=float) - eye_arr
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=float))
        if np.linalg.norm(right) < 1e-12:
            raise InvalidArgumentError("look_at direction is parallel to the up vector", module="geometry")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        return cls(np.column_stack([right, down, forward]), eye_arr)

    def as_params(self) -> np.ndarray:
        return np.concatenate([self.translation, Rotation.from_matrix(self.rotation).as_rotvec()])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self ∘ other (apply ``other`` first)."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array or a single 3-vector of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def apply_vectors(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.rotation.T


@dataclass(frozen=True)
class GraspPose:
    """Top-down grasp: tool-tip position in the robot frame and jaw closing heading.

    ``theta`` is stored in [0, pi).
    """

    x: float
    y: float
    z: float
    theta: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z, self.theta)):
            raise InvalidArgumentError(
                f"Non-finite grasp pose: ({self.x}, {self.y}, {self.z}, {self.theta})", module="geometry"
            )
        object.__setattr__(self, "theta", normalize_theta(float(self.theta)))

    @property
    def position(self) -> Vec3:
        return Vec3(self.x, self.y, self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.theta], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "GraspPose":
        return cls(float(values[0]), float(values[1]), float(values[2]), float(values[3]))


def transform_point(t: RigidTransform, p: Vec3, frame: str = "robot") -> Vec3:
    """Apply a rigid transform to a single point."""
    return Vec3.from_array(t.apply(p.as_array()), frame)


class Eigen2(NamedTuple):
    """Eigen-decomposition of a symmetric 2x2 matrix.

    ``vectors[i]`` is the unit eigenvector for ``values[i]``; values descend.
    """

    values: Tuple[float, float]
    vectors: np.ndarray


def _positive_first(v: np.ndarray) -> np.ndarray:
    for c in v:
        if c != 0.0:
            return (v if c > 0.0 else -v) + 0.0
    return v + 0.0


def eig2_sym(m: np.ndarray) -> Eigen2:
    """Closed-form eigensolve of a symmetric 2x2 matrix.

    Equal eigenvalues return the axis vectors (1, 0) and (0, 1).

    Raises:
        InvalidArgumentError: If the matrix is non-finite or not symmetric.
    """
    arr = np.asarray(m, dtype=float)
    if arr.shape != (2, 2):
        raise InvalidArgumentError(f"Expected a 2x2 matrix, got shape {arr.shape}", module="geometry")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("Matrix has non-finite entries", module="geometry")
    a, b, b2, d = arr[0, 0], arr[0, 1], arr[1, 0], arr[1, 1]
    scale = max(abs(a), abs(b), abs(d), 1.0)
    if abs(b - b2) >= 1e-12 * scale:
        raise InvalidArgumentError(f"Matrix is not symmetric: {b} != {b2}", module="geometry")

    half_diff = 0.5 * (a - d)
    mean = 0.5 * (a + d)
    radius = math.hypot(half_diff, b)
    values = (mean + radius, mean - radius)

    if radius <= 1e-15 * scale:
        return Eigen2(values, np.array([[1.0, 0.0], [0.0, 1.0]]))

    # pick the well-conditioned null-space row of (M - l1 I)
    if a >= d:
        v1 = np.array([half_diff + radius, b])
    else:
        v1 = np.array([b, radius - half_diff])
    v1 /= np.linalg.norm(v1)
    v2 = np.array([-v1[1], v1[0]])
    return Eigen2(values, np.vstack([_positive_first(v1), _positive_first(v2)]))


def normalize_theta(theta: float) -> float:
    """Map a jaw angle into [0, pi); parallel jaws are symmetric under pi."""
    t = math.fmod(theta, math.pi)
    if t < 0.0:
        t += math.pi
    if t >= math.pi:
        t = 0.0
    return t


def wrap_angle(angle: float) -> float:
    """Map an angle into [-pi, pi)."""
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def _stream_key(key: Union[int, str]) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key)


@dataclass(frozen=True)
class Seed:
    """Master seed from which every named random stream is derived.

    Streams are independent: drawing more numbers from the planner stream
    never shifts the scene stream.
    """

    value: int

    def __post_init__(self) -> None:
        if not 0 <= int(self.value) < 2**64:
            raise InvalidArgumentError(f"Seed must be a 64-bit unsigned integer, got {self.value}", module="geometry")

    def stream(self, name: str) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.value, spawn_key=(_stream_key(name),))))

    def child(self, *keys: Union[int, str]) -> "Seed":
        seq = np.random.SeedSequence(self.value, spawn_key=tuple(_stream_key(k) for k in keys))
        return Seed(int(seq.generate_state(1, dtype=np.uint64)[0]))


RandomSource = Union[Seed, int, np.random.Generator]


def as_generator(source: RandomSource, stream: str = "default") -> np.random.Generator:
    """Accept a Seed, a plain integer or an existing Generator."""
    if isinstance(source, np.random.Generator):
        return source
    if isinstance(source, Seed):
        return source.stream(stream)
    return Seed(int(source)).stream(stream)
