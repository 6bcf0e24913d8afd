"""Grasp records - one labelled random grasp, the depth image it was planned on and its binary layout."""

import struct
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .calibration import CalibrationModel
from .camera import CameraIntrinsics, DepthImage, floor_depth
from .constants import Workspace
from .exceptions import InvalidArgumentError
from .geometry import GraspPose, RigidTransform

# cell id, ordinal, seed, planned pose, label, achieved pose (nan when unreachable),
# cluster centre, cluster eigenvalues and major angle, cluster size, depth image ref
RECORD_FORMAT = "<HIQ4dB3d3d3dII"
RECORD_FIELDS = (
    "cell_id",
    "ordinal",
    "seed",
    "x",
    "y",
    "z",
    "theta",
    "success",
    "achieved_x",
    "achieved_y",
    "achieved_z",
    "cluster_x",
    "cluster_y",
    "cluster_z",
    "lambda_1",
    "lambda_2",
    "major_angle",
    "cluster_points",
    "depth_ref",
)
RECORD_SIZE = struct.calcsize(RECORD_FORMAT)
# Stored depth is uint16 in hundredths of a centimetre; 0 is no return
DEPTH_DTYPE = "<u2"
DEPTH_UNIT = 0.01
_DEPTH_MAX = np.iinfo(np.uint16).max


@dataclass(frozen=True)
class ClusterSummary:
    center: Tuple[float, float, float]
    eigenvalues: Tuple[float, float]
    major_angle: float
    points: int


@dataclass(frozen=True, eq=False)
class CameraView:
    """Camera and calibration a depth image was taken with."""

    intrinsics: CameraIntrinsics
    calibration: CalibrationModel
    camera_pose: RigidTransform
    floor_z: float = Workspace.FLOOR_Z

    def floor_depth(self) -> np.ndarray:
        return floor_depth(self.camera_pose, self.intrinsics, self.floor_z)

    def to_dict(self) -> Dict[str, object]:
        k = self.intrinsics
        return {
            "intrinsics": [k.fx, k.fy, k.cx, k.cy, k.width, k.height],
            "calibration": self.calibration.matrix.ravel().tolist(),
            "camera_pose": self.camera_pose.as_matrix()[:3, :].ravel().tolist(),
            "floor_z": self.floor_z,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "CameraView":
        try:
            fx, fy, cx, cy, width, height = data["intrinsics"]  # type: ignore[misc]
            pose = np.asarray(data["camera_pose"], dtype=float).reshape(3, 4)
            return cls(
                CameraIntrinsics(float(fx), float(fy), float(cx), float(cy), int(width), int(height)),
                CalibrationModel(np.asarray(data["calibration"], dtype=float)),
                RigidTransform(pose[:, :3], pose[:, 3]),
                float(data["floor_z"]),  # type: ignore[arg-type]
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidArgumentError(f"Malformed camera view: {e}", module="benchmark") from e

    def same_as(self, other: "CameraView") -> bool:
        return self.to_dict() == other.to_dict()


def encode_depth(depth: np.ndarray) -> np.ndarray:
    """Quantize a depth image in centimetres to the stored uint16 ticks."""
    ticks = np.rint(np.asarray(depth, dtype=float) / DEPTH_UNIT)
    return np.clip(np.where(np.isfinite(ticks), ticks, 0.0), 0, _DEPTH_MAX).astype(np.uint16)


@dataclass(frozen=True, eq=False)
class GraspRecord:
    """A labelled grasp with the depth image seen when it was planned.

    ``depth`` is given in centimetres (or as already quantized uint16 ticks)
    and kept as ticks, so a record survives a write and read unchanged.
    Scorer features are derived from it and ``view`` at training time.
    """

    cell_id: int
    ordinal: int
    seed: int
    pose: GraspPose
    success: bool
    achieved: Tuple[float, float, float]
    cluster: ClusterSummary
    depth: np.ndarray
    view: CameraView

    def __post_init__(self) -> None:
        p = self.pose
        if not (Workspace.X_MIN <= p.x <= Workspace.X_MAX and Workspace.Y_MIN <= p.y <= Workspace.Y_MAX):
            raise InvalidArgumentError(
                f"Record pose ({p.x:.2f}, {p.y:.2f}) lies outside the workspace", module="benchmark"
            )
        depth = np.asarray(self.depth)
        k = self.view.intrinsics
        if depth.shape != (k.height, k.width):
            raise InvalidArgumentError(
                f"Depth image is {depth.shape}, the camera gives ({k.height}, {k.width})", module="benchmark"
            )
        ticks = depth.astype(np.uint16) if depth.dtype == np.uint16 else encode_depth(depth)
        ticks.flags.writeable = False
        object.__setattr__(self, "depth", ticks)

    @property
    def label(self) -> int:
        return int(self.success)

    def depth_image(self) -> DepthImage:
        return DepthImage(self.depth.astype(float) * DEPTH_UNIT)

    def pack(self, depth_ref: int) -> bytes:
        c = self.cluster
        return struct.pack(
            RECORD_FORMAT,
            self.cell_id,
            self.ordinal,
            self.seed,
            self.pose.x,
            self.pose.y,
            self.pose.z,
            self.pose.theta,
            int(self.success),
            *self.achieved,
            *c.center,
            *c.eigenvalues,
            c.major_angle,
            c.points,
            depth_ref,
        )

    def depth_bytes(self) -> bytes:
        return self.depth.astype(DEPTH_DTYPE).tobytes()

    @staticmethod
    def depth_ref(data: bytes) -> int:
        return int(struct.unpack(RECORD_FORMAT, data)[-1])

    @classmethod
    def unpack(cls, data: bytes, depth: bytes, view: CameraView) -> "GraspRecord":
        v = struct.unpack(RECORD_FORMAT, data)
        if v[7] not in (0, 1):
            raise InvalidArgumentError(f"Record {v[1]} has label {v[7]}", module="benchmark")
        k = view.intrinsics
        ticks = np.frombuffer(depth, dtype=DEPTH_DTYPE).astype(np.uint16).reshape(k.height, k.width)
        return cls(
            cell_id=v[0],
            ordinal=v[1],
            seed=v[2],
            pose=GraspPose(v[3], v[4], v[5], v[6]),
            success=bool(v[7]),
            achieved=(v[8], v[9], v[10]),
            cluster=ClusterSummary((v[11], v[12], v[13]), (v[14], v[15]), v[16], v[17]),
            depth=ticks,
            view=view,
        )

    def same_as(self, other: "GraspRecord") -> bool:
        """Byte-level equality of the stored form."""
        return (
            self.pack(0) == other.pack(0)
            and self.depth_bytes() == other.depth_bytes()
            and self.view.same_as(other.view)
        )
