"""Camera - pinhole depth sensor that ray-casts the scene into depth, labels and a point cloud."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .constants import MESSAGES, Workspace
from .exceptions import ConfigurationError, InvalidArgumentError
from .geometry import RandomSource, RigidTransform, Vec3, as_generator
from .scene import Scene

logger = logging.getLogger(__name__)

# Sensor operating range in centimetres; returns outside read as 0
MIN_RANGE = 10.0
MAX_RANGE = 200.0
NOISE_TRUNCATION = 2.5
FLOOR_LABEL = -1
NO_RETURN_LABEL = -2
FLOOR_COLOR = (90, 90, 90)

DEFAULT_EYE = (0.0, -28.0, 50.0)
DEFAULT_TARGET = (0.0, 2.0, 0.0)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; pixel (u, v) has its centre at integer coordinates."""

    fx: float = 275.0
    fy: float = 275.0
    cx: float = 159.5
    cy: float = 119.5
    width: int = 320
    height: int = 240

    def __post_init__(self) -> None:
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise InvalidArgumentError(f"Focal lengths must be positive, got ({self.fx}, {self.fy})", module="camera")
        if self.width <= 0 or self.height <= 0:
            raise InvalidArgumentError(f"Image size must be positive, got {self.width}x{self.height}", module="camera")
        if not (0.0 <= self.cx < self.width and 0.0 <= self.cy < self.height):
            raise InvalidArgumentError(f"Principal point ({self.cx}, {self.cy}) outside the image", module="camera")

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Same camera at a different resolution."""
        return CameraIntrinsics(
            self.fx * factor,
            self.fy * factor,
            (self.cx + 0.5) * factor - 0.5,
            (self.cy + 0.5) * factor - 0.5,
            max(1, int(round(self.width * factor))),
            max(1, int(round(self.height * factor))),
        )

    def in_bounds(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        return (px >= -0.5) & (px < self.width - 0.5) & (py >= -0.5) & (py < self.height - 0.5)


def default_camera_pose() -> RigidTransform:
    """Front-mounted camera tilted down over the workspace centre."""
    return RigidTransform.look_at(DEFAULT_EYE, DEFAULT_TARGET)


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Depth along the optical axis in centimetres; 0 marks no return.

    ``labels`` holds the object id seen at each pixel, -1 for floor and -2
    for no return.
    """

    depth: np.ndarray
    labels: Optional[np.ndarray] = None

    @property
    def height(self) -> int:
        return int(self.depth.shape[0])

    @property
    def width(self) -> int:
        return int(self.depth.shape[1])

    def valid_mask(self) -> np.ndarray:
        return self.depth > 0.0


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Camera-frame points with optional RGB and the pixel each came from."""

    points: np.ndarray
    colors: Optional[np.ndarray] = None
    pixels: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def transformed(self, t: RigidTransform) -> "PointCloud":
        return PointCloud(t.apply(self.points), self.colors, self.pixels, self.labels)


def pixel_rays(k: CameraIntrinsics) -> np.ndarray:
    """Camera-frame ray per pixel, shape (H*W, 3), with unit z component."""
    u, v = np.meshgrid(np.arange(k.width, dtype=float), np.arange(k.height, dtype=float))
    return np.column_stack([((u - k.cx) / k.fx).ravel(), ((v - k.cy) / k.fy).ravel(), np.ones(u.size)])


def project(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Pixel coordinates (u, v) of camera-frame points with positive depth."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(pts[:, 2] <= 0.0):
        raise InvalidArgumentError("Cannot project points at or behind the camera", module="camera")
    return np.column_stack([k.fx * pts[:, 0] / pts[:, 2] + k.cx, k.fy * pts[:, 1] / pts[:, 2] + k.cy])


def deproject(px: float, py: float, depth: float, k: CameraIntrinsics) -> Vec3:
    """Back-project one pixel at ``depth`` into the camera frame.

    Raises:
        InvalidArgumentError: On the no-return sentinel or a pixel outside the image.
    """
    if not depth > 0.0:
        raise InvalidArgumentError(f"Depth must be positive, got {depth}", module="camera")
    if not k.in_bounds(np.asarray(px), np.asarray(py)):
        raise InvalidArgumentError(f"Pixel ({px}, {py}) outside a {k.width}x{k.height} image", module="camera")
    return Vec3((px - k.cx) * depth / k.fx, (py - k.cy) * depth / k.fy, depth, frame="camera")


def deproject_image(depth: np.ndarray, k: CameraIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """Back-project every valid pixel; returns (points, pixel (u, v) indices)."""
    v, u = np.nonzero(depth > 0.0)
    d = depth[v, u]
    points = np.column_stack([(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d])
    return points, np.column_stack([u, v])


def _floor_distance(pose: RigidTransform, dirs: np.ndarray, floor_z: float) -> np.ndarray:
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (floor_z - pose.translation[2]) / dz
    return np.where((dz < 0.0) & (t > 0.0), t, np.inf)


def floor_depth(pose: RigidTransform, k: CameraIntrinsics, floor_z: float = Workspace.FLOOR_Z) -> np.ndarray:
    """Depth image of the bare floor, 0 where the floor is out of range."""
    rays = pixel_rays(k)
    t = _floor_distance(pose, pose.apply_vectors(rays), floor_z)
    depth = np.where(np.isfinite(t) & (t > MIN_RANGE) & (t < MAX_RANGE), t, 0.0)
    return depth.reshape(k.height, k.width)


def render(
    scene: Scene,
    pose: RigidTransform,
    k: CameraIntrinsics,
    seed: RandomSource,
    noise_sigma: float = 0.15,
) -> Tuple[DepthImage, PointCloud]:
    """Render depth and a colored point cloud of ``scene`` from camera ``pose``.

    Rays have unit optical-axis component so the hit distance is the pixel
    depth. Noise is Gaussian, truncated at 2.5 sigma, and drawn from the
    seed's sensor stream.

    Raises:
        ConfigurationError: If no pixel sees the floor.
    """
    rays = pixel_rays(k)
    dirs = pose.apply_vectors(rays)
    t_floor = _floor_distance(pose, dirs, scene.floor_z)
    t_obj, obj_label = scene.raycast(pose.translation, dirs)

    depth = np.minimum(t_floor, t_obj)
    labels = np.where(t_obj < t_floor, obj_label, np.where(np.isfinite(t_floor), FLOOR_LABEL, NO_RETURN_LABEL))
    valid = np.isfinite(depth) & (depth > MIN_RANGE) & (depth < MAX_RANGE)
    if not np.any(valid & (labels == FLOOR_LABEL)):
        raise ConfigurationError(MESSAGES["NO_FLOOR"])

    if noise_sigma > 0.0:
        gen = as_generator(seed, "sensor")
        noise = np.clip(gen.standard_normal(depth.shape), -NOISE_TRUNCATION, NOISE_TRUNCATION) * noise_sigma
        depth = np.where(valid, depth + noise, depth)
        valid &= (depth > MIN_RANGE) & (depth < MAX_RANGE)

    depth = np.where(valid, depth, 0.0)
    labels = np.where(valid, labels, NO_RETURN_LABEL)
    image = DepthImage(depth.reshape(k.height, k.width), labels.reshape(k.height, k.width))

    points, pixels = deproject_image(image.depth, k)
    point_labels = image.labels[pixels[:, 1], pixels[:, 0]]
    colors = np.tile(np.array(FLOOR_COLOR, dtype=np.uint8), (len(points), 1))
    for obj in scene.objects:
        colors[point_labels == obj.id] = obj.shape.color
    logger.debug(f"Rendered {len(points)} points, {int(np.sum(point_labels >= 0))} on objects")
    return image, PointCloud(points, colors, pixels, point_labels)
