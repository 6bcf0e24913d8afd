"""Calibration - camera-to-robot affine fit, control-noise model and cross-cell camera alignment."""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from .camera import CameraIntrinsics, PointCloud, render
from .constants import MESSAGES, Workspace
from .exceptions import AlignmentFailedError, DegenerateInputError, InvalidArgumentError, InvalidModelError
from .geometry import RandomSource, RigidTransform, Vec3, as_generator
from .scene import Scene, reference_scene

logger = logging.getLogger(__name__)

ALPHA_SANITY_BAND = (0.5, 1.5)
MIN_INVERTIBLE_ALPHA = 0.1


@dataclass(frozen=True)
class Correspondence:
    """Same physical point seen by the camera and touched by the arm."""

    p_cam: Vec3
    p_arm: Vec3


@dataclass(frozen=True, eq=False)
class CalibrationModel:
    """3x4 affine map from homogeneous camera points (x, y, depth, 1) to the robot frame."""

    matrix: np.ndarray
    residual: float = 0.0

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float).reshape(3, 4)
        if not np.all(np.isfinite(m)):
            raise InvalidModelError("Calibration matrix has non-finite entries")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_transform(cls, t: RigidTransform) -> "CalibrationModel":
        return cls(t.as_matrix()[:3, :])

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self.matrix[:, :3].T + self.matrix[:, 3]

    def inverse_apply(self, points: np.ndarray) -> np.ndarray:
        """Map robot-frame points back into the camera frame."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return linalg.solve(self.matrix[:, :3], (pts - self.matrix[:, 3]).T).T


@dataclass(frozen=True)
class NoiseModel:
    """Affine horizontal controller distortion q = alpha * p + beta.

    By default one (alpha, beta) pair is shared by x and y; ``alpha_y`` and
    ``beta_y`` hold a separate y fit when present.
    """

    alpha: float = 1.0
    beta: float = 0.0
    residual: float = 0.0
    alpha_y: Optional[float] = None
    beta_y: Optional[float] = None

    def __post_init__(self) -> None:
        for a in (self.alpha, self.alpha_y):
            if a is not None and not ALPHA_SANITY_BAND[0] < a < ALPHA_SANITY_BAND[1]:
                logger.warning(f"Noise model gain alpha={a} is outside the sanity band {ALPHA_SANITY_BAND}")

    @property
    def per_axis(self) -> bool:
        return self.alpha_y is not None

    def axis(self, index: int) -> Tuple[float, float]:
        if index == 1 and self.alpha_y is not None:
            return self.alpha_y, self.beta if self.beta_y is None else self.beta_y
        return self.alpha, self.beta

    def distort(self, x: float, y: float) -> Tuple[float, float]:
        ax, bx = self.axis(0)
        ay, by = self.axis(1)
        return ax * x + bx, ay * y + by


def solve_calibration(pairs: Sequence[Correspondence]) -> CalibrationModel:
    """Least-squares affine C from camera/arm correspondences.

    Raises:
        DegenerateInputError: With fewer than 4 pairs or coplanar camera points.
    """
    if len(pairs) < 4:
        raise DegenerateInputError(MESSAGES["DEGENERATE_CALIBRATION"])
    design = np.column_stack([np.array([p.p_cam.as_array() for p in pairs]), np.ones(len(pairs))])
    targets = np.array([p.p_arm.as_array() for p in pairs])
    if np.linalg.matrix_rank(design) < 4:
        raise DegenerateInputError(MESSAGES["DEGENERATE_CALIBRATION"])
    solution, _, _, _ = linalg.lstsq(design, targets)
    errors = design @ solution - targets
    residual = float(np.sqrt(np.mean(np.sum(errors**2, axis=1))))
    logger.info(f"Solved calibration from {len(pairs)} pairs, residual RMS {residual:.3f} cm")
    return CalibrationModel(solution.T, residual)


def calibration_error(model: CalibrationModel, pairs: Sequence[Correspondence]) -> float:
    """Mean Euclidean error of C p_cam against p_arm."""
    if not pairs:
        raise DegenerateInputError("Calibration error needs at least one correspondence")
    cam = np.array([p.p_cam.as_array() for p in pairs])
    arm = np.array([p.p_arm.as_array() for p in pairs])
    return float(np.mean(np.linalg.norm(model.apply(cam) - arm, axis=1)))


def fit_noise_model(targets: Sequence[Vec3], achieved: Sequence[Vec3], per_axis: bool = False) -> NoiseModel:
    """Fit achieved = alpha * target + beta over the horizontal coordinates.

    The pooled fit stacks x and y into one scalar regression; ``per_axis``
    fits them separately.

    Raises:
        DegenerateInputError: On mismatched lists or no spread in the targets.
    """
    if len(targets) != len(achieved) or len(targets) < 2:
        raise DegenerateInputError(MESSAGES["DEGENERATE_NOISE_FIT"])
    t = np.array([[p.x, p.y] for p in targets])
    a = np.array([[p.x, p.y] for p in achieved])

    def fit(tv: np.ndarray, av: np.ndarray) -> Tuple[float, float, np.ndarray]:
        if np.ptp(tv) < 1e-12:
            raise DegenerateInputError(MESSAGES["DEGENERATE_NOISE_FIT"])
        design = np.column_stack([tv, np.ones(len(tv))])
        (alpha, beta), _, _, _ = linalg.lstsq(design, av)
        return float(alpha), float(beta), design @ np.array([alpha, beta]) - av

    if per_axis:
        ax, bx, rx = fit(t[:, 0], a[:, 0])
        ay, by, ry = fit(t[:, 1], a[:, 1])
        residual = float(np.sqrt(np.mean(np.concatenate([rx, ry]) ** 2)))
        model = NoiseModel(ax, bx, residual, ay, by)
    else:
        alpha, beta, r = fit(t.ravel(), a.ravel())
        model = NoiseModel(alpha, beta, float(np.sqrt(np.mean(r**2))))
    logger.info(f"Fitted noise model alpha={model.alpha:.4f} beta={model.beta:.4f} residual={model.residual:.3f}")
    return model


def compensate(nm: NoiseModel, p: Vec3) -> Vec3:
    """Pre-distort a target so the controller lands on it: p' = (p - beta) / alpha.

    Raises:
        InvalidModelError: If a gain is too close to zero to invert.
    """
    out = []
    for index, value in enumerate((p.x, p.y)):
        alpha, beta = nm.axis(index)
        if abs(alpha) < MIN_INVERTIBLE_ALPHA:
            raise InvalidModelError(MESSAGES["SMALL_ALPHA"].format(alpha=alpha))
        out.append((value - beta) / alpha)
    return Vec3(out[0], out[1], p.z, p.frame)


def floor_grid(count_x: int = 5, count_y: int = 5, z: float = Workspace.FLOOR_Z, margin: float = 2.5) -> List[Vec3]:
    """Evenly spaced targets over the workspace floor, row-major in y."""
    xs = np.linspace(Workspace.X_MIN + margin, Workspace.X_MAX - margin, count_x)
    ys = np.linspace(Workspace.Y_MIN + margin, Workspace.Y_MAX - margin, count_y)
    return [Vec3(float(x), float(y), z) for y in ys for x in xs]


def synthesize_correspondences(
    camera_pose: RigidTransform,
    k: CameraIntrinsics,
    count: int,
    seed: RandomSource,
    marker_sigma: float = 0.5,
    depth_sigma: float = 0.15,
    heights: Tuple[float, float] = (0.5, 12.0),
) -> List[Correspondence]:
    """Simulated checkerboard touches at random points inside the cell.

    The camera side sees the marker quantized to a pixel with depth noise;
    the arm side records its position with Gaussian marker error.
    """
    gen = as_generator(seed, "calibration")
    world_to_cam = camera_pose.inverse()
    pairs: List[Correspondence] = []
    while len(pairs) < count:
        truth = np.array(
            [
                gen.uniform(Workspace.X_MIN, Workspace.X_MAX),
                gen.uniform(Workspace.Y_MIN, Workspace.Y_MAX),
                gen.uniform(*heights),
            ]
        )
        cam = world_to_cam.apply(truth)
        if cam[2] <= 0.0:
            continue
        u = round(k.fx * cam[0] / cam[2] + k.cx)
        v = round(k.fy * cam[1] / cam[2] + k.cy)
        if not (0 <= u < k.width and 0 <= v < k.height):
            continue
        depth = cam[2] + depth_sigma * gen.standard_normal()
        p_cam = Vec3((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth, frame="camera")
        p_arm = Vec3.from_array(truth + marker_sigma * gen.standard_normal(3))
        pairs.append(Correspondence(p_cam, p_arm))
    return pairs


@dataclass(frozen=True)
class AlignmentResult:
    pose: RigidTransform
    discrepancy: float
    iterations: int
    history: List[float] = field(default_factory=list, compare=False)


def _reference_depth(cloud: PointCloud, k: CameraIntrinsics) -> np.ndarray:
    if cloud.pixels is None:
        raise InvalidArgumentError("Reference cloud carries no pixel indices", module="calibration")
    depth = np.zeros((k.height, k.width))
    depth[cloud.pixels[:, 1], cloud.pixels[:, 0]] = cloud.points[:, 2]
    return depth


def depth_discrepancy(reference: np.ndarray, candidate: np.ndarray) -> float:
    """Mean absolute depth difference over pixels valid in both images."""
    both = (reference > 0.0) & (candidate > 0.0)
    if not np.any(both):
        return math.inf
    return float(np.mean(np.abs(reference[both] - candidate[both])))


def align_cell_camera(
    reference_cloud: PointCloud,
    candidate_pose: RigidTransform,
    k: Optional[CameraIntrinsics] = None,
    scene: Optional[Scene] = None,
    tolerance: float = 0.3,
    max_iterations: int = 200,
    translation_step: float = 1.0,
    rotation_step: float = math.radians(1.0),
    refine_evaluations: int = 600,
) -> AlignmentResult:
    """Nudge a camera pose until its view of the reference scene matches the reference cloud.

    Coordinate descent over (tx, ty, tz, rx, ry, rz): each iteration tries
    plus and minus one step on every parameter and keeps improvements; a
    sweep without improvement halves the steps. Once the discrepancy is
    under ``tolerance`` a Nelder-Mead pass, in units of the initial steps,
    polishes the pose for at most ``refine_evaluations`` renders.

    Raises:
        AlignmentFailedError: If the discrepancy is still above ``tolerance``.
    """
    k = k or CameraIntrinsics().scaled(0.5)
    scene = scene or reference_scene()
    reference = _reference_depth(reference_cloud, k)

    def discrepancy(params: np.ndarray) -> float:
        image, _ = render(scene, RigidTransform.from_params(params), k, 0, noise_sigma=0.0)
        return depth_discrepancy(reference, image.depth)

    params = candidate_pose.as_params()
    steps = np.array([translation_step] * 3 + [rotation_step] * 3)
    best = discrepancy(params)
    history = [best]
    iteration = 0
    while best >= tolerance and iteration < max_iterations:
        iteration += 1
        improved = False
        for i in range(6):
            for sign in (1.0, -1.0):
                trial = params.copy()
                trial[i] += sign * steps[i]
                score = discrepancy(trial)
                if score < best:
                    params, best, improved = trial, score, True
                    break
        if not improved:
            steps *= 0.5
        history.append(best)
        logger.debug(f"Alignment iteration {iteration}: discrepancy {best:.4f} cm")

    if best < tolerance and best > 0.0 and refine_evaluations > 0:
        scale = np.array([translation_step] * 3 + [rotation_step] * 3)
        origin = params.copy()
        simplex = np.vstack([np.zeros(6), 0.25 * np.eye(6)])
        polished = optimize.minimize(
            lambda x: discrepancy(origin + x * scale),
            np.zeros(6),
            method="Nelder-Mead",
            options={"initial_simplex": simplex, "xatol": 1e-3, "fatol": 1e-5, "maxfev": refine_evaluations},
        )
        if polished.fun < best:
            params, best = origin + polished.x * scale, float(polished.fun)
            history.append(best)
        logger.debug(f"Alignment polish: discrepancy {best:.4f} cm after {polished.nfev} renders")

    pose = RigidTransform.from_params(params)
    if best >= tolerance:
        raise AlignmentFailedError(MESSAGES["ALIGN_FAILED"].format(discrepancy=best), best, pose)
    logger.info(f"Camera aligned in {iteration} iterations, discrepancy {best:.4f} cm")
    return AlignmentResult(pose, best, iteration, history)
