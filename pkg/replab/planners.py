"""Planners - grasp candidates, baseline planners and the learned depth scorers.

Every planner consumes an :class:`Observation` (clusters plus the depth
image) and returns one :class:`GraspPose`. Randomness comes from the
``planner`` stream of the seed it is handed.
"""

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from sklearn.metrics import balanced_accuracy_score

from .arm import GripperSpec
from .calibration import CalibrationModel
from .camera import CameraIntrinsics, DepthImage
from .constants import GripperDefaults, MESSAGES, PlannerName, PlannerSettings, ScorerKind, Workspace
from .exceptions import DegenerateDataError, InvalidArgumentError, NoTargetError, OutOfViewError
from .geometry import GraspPose, RandomSource, as_generator, normalize_theta
from .perception import ClusterTarget
from .scene import Scene, grasp_success_batch

logger = logging.getLogger(__name__)

__all__ = [
    "GraspPose",
    "GraspCandidate",
    "ClusterTarget",
    "FeatureContext",
    "Observation",
    "ScorerModel",
    "TrainingConfig",
    "sample_candidates",
    "plan_random_xyztheta",
    "plan_random_theta",
    "plan_principal_axis",
    "extract_features",
    "train_scorer",
    "finetune_scorer",
    "plan_learned",
    "make_planner",
]

# Height differences below this read as bare floor in depth features
FEATURE_FLOOR_MARGIN = 0.5
NULL_TARGET_HEIGHT = 12.0
MIN_TRAINING_EXAMPLES = 100
MODEL_MAGIC = b"RPLS"
MODEL_VERSION = 1
POSE_FEATURES = 5


@dataclass(frozen=True)
class GraspCandidate:
    pose: GraspPose
    cluster_id: int
    score: float = 0.0


@dataclass(frozen=True, eq=False)
class FeatureContext:
    """What the scorers need to look a robot-frame candidate up in the depth image."""

    calibration: CalibrationModel
    intrinsics: CameraIntrinsics
    floor_depth: np.ndarray
    crop_size: int = PlannerSettings.CROP_SIZE
    full_shape: Tuple[int, int] = PlannerSettings.FULL_IMAGE_SHAPE

    def to_pixels(self, xyz: np.ndarray) -> np.ndarray:
        cam = self.calibration.inverse_apply(xyz)
        k = self.intrinsics
        with np.errstate(divide="ignore", invalid="ignore"):
            u = k.fx * cam[:, 0] / cam[:, 2] + k.cx
            v = k.fy * cam[:, 1] / cam[:, 2] + k.cy
        behind = cam[:, 2] <= 0.0
        return np.column_stack([np.where(behind, np.nan, u), np.where(behind, np.nan, v)])

    def height_map(self, depth: DepthImage) -> np.ndarray:
        """Floor depth minus observed depth, zero on bare floor and missing returns."""
        d = depth.depth
        diff = np.where((d > 0.0) & (self.floor_depth > 0.0), self.floor_depth - d, 0.0)
        return np.where(diff > FEATURE_FLOOR_MARGIN, diff, 0.0)


@dataclass(frozen=True, eq=False)
class Observation:
    """Everything a planner may look at for one attempt.

    ``scene`` is ground truth and only the oracle planner reads it.
    """

    targets: Sequence[ClusterTarget]
    depth: Optional[DepthImage] = None
    context: Optional[FeatureContext] = None
    scene: Optional[Scene] = None


def _clip_to_workspace(x: float, y: float) -> Tuple[float, float]:
    return (
        float(np.clip(x, Workspace.X_MIN, Workspace.X_MAX)),
        float(np.clip(y, Workspace.Y_MIN, Workspace.Y_MAX)),
    )


def sample_candidate_array(
    targets: Sequence[ClusterTarget], n_per_cluster: int, seed: RandomSource
) -> Tuple[np.ndarray, np.ndarray]:
    """Candidates as arrays: poses (M, 4) of (x, y, z, theta) and source cluster ids (M,)."""
    gen = as_generator(seed, "planner")
    poses, ids = [], []
    for target in targets:
        pts = target.cluster.points
        pick = gen.integers(len(pts), size=n_per_cluster)
        theta = gen.uniform(0.0, math.pi, size=n_per_cluster)
        poses.append(np.column_stack([pts[pick], theta]))
        ids.append(np.full(n_per_cluster, target.cluster.id))
    if not poses:
        return np.zeros((0, 4)), np.zeros(0, dtype=int)
    return np.vstack(poses), np.concatenate(ids)


def sample_candidates(
    targets: Sequence[ClusterTarget],
    n_per_cluster: int = PlannerSettings.CANDIDATES_PER_CLUSTER,
    seed: RandomSource = 0,
) -> List[GraspCandidate]:
    """Positions drawn from cluster members, theta uniform on [0, pi)."""
    poses, ids = sample_candidate_array(targets, n_per_cluster, seed)
    return [GraspCandidate(GraspPose.from_array(p), int(c)) for p, c in zip(poses, ids)]


def plan_random_xyztheta(
    targets: Sequence[ClusterTarget],
    seed: RandomSource,
    region: Tuple[float, float, float] = PlannerSettings.RANDOM_REGION,
) -> GraspPose:
    """Random cluster, its centre jittered uniformly within +-region, random theta."""
    if not targets:
        raise NoTargetError(MESSAGES["NO_CLUSTERS"])
    gen = as_generator(seed, "planner")
    choice = targets[int(gen.integers(len(targets)))]
    jitter = gen.uniform(-1.0, 1.0, size=3) * np.asarray(region, dtype=float)
    theta = gen.uniform(0.0, math.pi)
    c = choice.stats.center
    x, y = _clip_to_workspace(c.x + jitter[0], c.y + jitter[1])
    return GraspPose(x, y, c.z + jitter[2], theta)


def plan_random_theta(targets: Sequence[ClusterTarget], seed: RandomSource) -> GraspPose:
    """Random cluster centre, random theta."""
    return plan_random_xyztheta(targets, seed, region=(0.0, 0.0, 0.0))


def plan_principal_axis(
    targets: Sequence[ClusterTarget], seed: RandomSource, top_k: int = PlannerSettings.TOP_K
) -> GraspPose:
    """Grasp across the major axis of one of the most elongated clusters."""
    if not targets:
        raise NoTargetError(MESSAGES["NO_CLUSTERS"])
    gen = as_generator(seed, "planner")
    confidence = np.array([t.stats.confidence for t in targets])
    ranked = np.argsort(-confidence, kind="stable")[:top_k]
    chosen = targets[int(ranked[int(gen.integers(len(ranked)))])].stats
    c = chosen.center
    return GraspPose(c.x, c.y, c.z, normalize_theta(chosen.major_angle + math.pi / 2))


# --- features -----------------------------------------------------------------------------


def theta_bin(theta: np.ndarray, bins: int = PlannerSettings.THETA_BINS) -> np.ndarray:
    t = np.mod(np.asarray(theta, dtype=float), math.pi)
    return np.clip((t / (math.pi / bins)).astype(int), 0, bins - 1)


def feature_length(kind: ScorerKind, context: Optional[FeatureContext] = None) -> int:
    crop = context.crop_size if context else PlannerSettings.CROP_SIZE
    shape = context.full_shape if context else PlannerSettings.FULL_IMAGE_SHAPE
    if ScorerKind(kind) == ScorerKind.CROPPED:
        return crop * crop
    return shape[0] * shape[1] + POSE_FEATURES


def full_image_features(height_map: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Block-mean downsample of the height map to ``shape`` (rows, cols)."""
    rows, cols = shape
    h, w = height_map.shape
    if h >= rows and w >= cols:
        bh, bw = h // rows, w // cols
        return height_map[: rows * bh, : cols * bw].reshape(rows, bh, cols, bw).mean(axis=(1, 3)).ravel()
    zoom = ndimage.zoom(height_map, (rows / h, cols / w), order=1)
    return zoom[:rows, :cols].ravel()


def pose_features(poses: np.ndarray) -> np.ndarray:
    """Pose columns appended to full-image features; theta enters as sin and cos of 2 theta."""
    poses = np.atleast_2d(poses)
    return np.column_stack(
        [poses[:, 0], poses[:, 1], poses[:, 2], np.sin(2.0 * poses[:, 3]), np.cos(2.0 * poses[:, 3])]
    )


def candidate_features(
    depth: DepthImage,
    poses: np.ndarray,
    kind: ScorerKind,
    context: FeatureContext,
) -> Tuple[np.ndarray, np.ndarray]:
    """Feature rows for a batch of (x, y, z, theta) poses and the in-view mask."""
    poses = np.atleast_2d(np.asarray(poses, dtype=float))
    pixels = context.to_pixels(poses[:, :3])
    k = context.intrinsics
    with np.errstate(invalid="ignore"):
        in_view = np.isfinite(pixels).all(axis=1) & k.in_bounds(pixels[:, 0], pixels[:, 1])
    hmap = context.height_map(depth)

    if ScorerKind(kind) == ScorerKind.CROPPED:
        n = context.crop_size
        offsets = np.arange(n) - (n - 1) / 2.0
        px = np.where(in_view, pixels[:, 0], 0.0)
        py = np.where(in_view, pixels[:, 1], 0.0)
        uu = px[:, None, None] + offsets[None, None, :]
        vv = py[:, None, None] + offsets[None, :, None]
        uu, vv = np.broadcast_arrays(uu, vv)
        patch = ndimage.map_coordinates(hmap, [vv.ravel(), uu.ravel()], order=1, mode="constant", cval=0.0)
        return patch.reshape(len(poses), n * n), in_view

    image = full_image_features(hmap, context.full_shape)
    return np.hstack([np.tile(image, (len(poses), 1)), pose_features(poses)]), in_view


def extract_features(
    depth: DepthImage,
    candidate: GraspCandidate,
    kind: ScorerKind,
    context: FeatureContext,
) -> np.ndarray:
    """Feature vector of one candidate.

    Raises:
        OutOfViewError: If the candidate projects outside the image.
    """
    features, in_view = candidate_features(depth, candidate.pose.as_array()[None, :], kind, context)
    if not in_view[0]:
        px = context.to_pixels(candidate.pose.as_array()[None, :3])[0]
        raise OutOfViewError(MESSAGES["OUT_OF_VIEW"].format(u=px[0], v=px[1]))
    return features[0]


# --- learned scorer -----------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 30
    batch_size: int = 0
    learning_rate: float = 1.0
    l2: float = 1e-3
    holdout_fraction: float = 0.2


@dataclass(frozen=True, eq=False)
class ScorerModel:
    """Standardized logistic model with one head per theta bin (cropped) or a single head (full)."""

    kind: ScorerKind
    mean: np.ndarray
    scale: np.ndarray
    weights: np.ndarray
    bias: np.ndarray
    crop_size: int = PlannerSettings.CROP_SIZE
    theta_bins: int = PlannerSettings.THETA_BINS
    accuracy: float = float("nan")
    loss_history: List[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScorerKind(self.kind))
        heads = self.theta_bins if self.kind == ScorerKind.CROPPED else 1
        if self.weights.shape != (heads, len(self.mean)) or self.bias.shape != (heads,):
            raise InvalidArgumentError(f"Scorer of kind {self.kind.value} needs {heads} heads", module="planners")
        for arr in (self.mean, self.scale, self.weights, self.bias):
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError("Scorer parameters must be finite", module="planners")

    @property
    def heads(self) -> int:
        return int(self.weights.shape[0])

    @property
    def parameter_count(self) -> int:
        return int(self.mean.size + self.scale.size + self.weights.size + self.bias.size)

    def head_index(self, theta: np.ndarray) -> np.ndarray:
        if self.kind == ScorerKind.FULL:
            return np.zeros(len(np.atleast_1d(theta)), dtype=int)
        return theta_bin(theta, self.theta_bins)

    def logits(self, features: np.ndarray, heads: np.ndarray) -> np.ndarray:
        z = (np.atleast_2d(features) - self.mean) / self.scale
        return np.einsum("ij,ij->i", z, self.weights[heads]) + self.bias[heads]

    def predict_proba(self, features: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return _sigmoid(self.logits(features, self.head_index(theta)))

    def to_bytes(self) -> bytes:
        """Binary layout: magic, header, then float64 mean, scale, weights, bias."""
        kind_code = 0 if self.kind == ScorerKind.CROPPED else 1
        header = struct.pack(
            "<4sHBHHIHId",
            MODEL_MAGIC,
            MODEL_VERSION,
            kind_code,
            self.crop_size,
            self.theta_bins,
            len(self.mean),
            self.heads,
            self.parameter_count,
            self.accuracy,
        )
        body = np.concatenate([self.mean, self.scale, self.weights.ravel(), self.bias]).astype("<f8").tobytes()
        return header + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "ScorerModel":
        size = struct.calcsize("<4sHBHHIHId")
        if len(data) < size:
            raise InvalidArgumentError("Scorer file is truncated", module="planners")
        magic, version, kind_code, crop, bins, dim, heads, count, accuracy = struct.unpack("<4sHBHHIHId", data[:size])
        if magic != MODEL_MAGIC or version != MODEL_VERSION:
            raise InvalidArgumentError(f"Not a scorer file (magic {magic!r}, version {version})", module="planners")
        params = np.frombuffer(data[size:], dtype="<f8").astype(float)
        if len(params) != count or count != 2 * dim + heads * dim + heads:
            raise InvalidArgumentError(
                f"Scorer file holds {len(params)} parameters, header says {count}", module="planners"
            )
        mean, scale = params[:dim], params[dim : 2 * dim]
        weights = params[2 * dim : 2 * dim + heads * dim].reshape(heads, dim)
        bias = params[2 * dim + heads * dim :]
        kind = ScorerKind.CROPPED if kind_code == 0 else ScorerKind.FULL
        return cls(kind, mean, scale, weights, bias, crop, bins, accuracy)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def balanced_split(labels: np.ndarray, fraction: float, gen: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Train and held-out indices; the held-out part has equally many successes and failures."""
    labels = np.asarray(labels, dtype=bool)
    pos = gen.permutation(np.flatnonzero(labels))
    neg = gen.permutation(np.flatnonzero(~labels))
    per_class = max(1, int(min(len(pos), len(neg)) * fraction))
    holdout = np.concatenate([pos[:per_class], neg[:per_class]])
    train = np.setdiff1d(np.arange(len(labels)), holdout)
    return np.sort(train), np.sort(holdout)


def _weighted_loss(
    z: np.ndarray, y: np.ndarray, w: np.ndarray, weights: np.ndarray, l2: float
) -> float:
    # log(1 + e^z) - y z, computed stably
    loss = np.logaddexp(0.0, z) - y * z
    return float(np.sum(w * loss) / np.sum(w) + 0.5 * l2 * np.sum(weights**2))


def _class_weights(yt: np.ndarray) -> np.ndarray:
    n_pos = max(1.0, float(yt.sum()))
    n_neg = max(1.0, len(yt) - float(yt.sum()))
    return np.where(yt > 0.5, len(yt) / (2.0 * n_pos), len(yt) / (2.0 * n_neg))


def _descend(
    Z: np.ndarray,
    yt: np.ndarray,
    bt: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
    hyper: TrainingConfig,
    gen: np.random.Generator,
    history: Sequence[float] = (),
) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    """Gradient descent on the class-rebalanced logistic loss, starting from (weights, bias).

    Appends the full training loss after every epoch to a copy of ``history``.
    """
    W, b, losses = weights.copy(), bias.copy(), list(history)
    w = _class_weights(yt)
    # smoothness bound of the weighted logistic loss gives a safe step
    aug_norm = np.linalg.norm(np.column_stack([Z, np.ones(len(Z))]), ord=2)
    step = hyper.learning_rate / (w.max() * aug_norm**2 / (4.0 * w.sum()) + hyper.l2)
    onehot = np.eye(len(b))[bt]

    def gradient(idx: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        z = np.einsum("ij,ij->i", Z[idx], W[bt[idx]]) + b[bt[idx]]
        g = w[idx] * (_sigmoid(z) - yt[idx]) / float(w[idx].sum())
        return (onehot[idx] * g[:, None]).T @ Z[idx] + hyper.l2 * W, onehot[idx].T @ g

    everything = np.arange(len(yt))
    for epoch in range(hyper.epochs):
        if hyper.batch_size <= 0 or hyper.batch_size >= len(yt):
            batches = [everything]
        else:
            order = gen.permutation(len(yt))
            batches = [order[i : i + hyper.batch_size] for i in range(0, len(order), hyper.batch_size)]
        for idx in batches:
            gw, gb = gradient(idx)
            W -= step * gw
            b -= step * gb
        losses.append(_weighted_loss(np.einsum("ij,ij->i", Z, W[bt]) + b[bt], yt, w, W, hyper.l2))
        logger.debug(f"Scorer epoch {epoch + 1}/{hyper.epochs}: loss {losses[-1]:.5f}")
    return W, b, losses


def _holdout_accuracy(
    model: ScorerModel, X: np.ndarray, bins: np.ndarray, y: np.ndarray, holdout: np.ndarray
) -> float:
    prob = _sigmoid(model.logits(X[holdout], bins[holdout]))
    return float(balanced_accuracy_score(y[holdout], prob > 0.5))


def train_scorer(
    features: np.ndarray,
    theta_bins: np.ndarray,
    labels: np.ndarray,
    kind: ScorerKind,
    hyper: Optional[TrainingConfig] = None,
    seed: RandomSource = 0,
    crop_size: int = PlannerSettings.CROP_SIZE,
) -> ScorerModel:
    """Fit a class-rebalanced, L2-regularized logistic scorer by gradient descent.

    A balanced held-out split (equal successes and failures) is set aside
    and its balanced accuracy is stored on the model. ``batch_size`` 0 means
    full-batch descent, whose loss never increases. ``crop_size`` is recorded on the
    model so planning crops the same patch the features came from.

    Raises:
        DegenerateDataError: With fewer than 100 examples or a single class.
    """
    hyper = hyper or TrainingConfig()
    kind = ScorerKind(kind)
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=bool)
    bins = np.asarray(theta_bins, dtype=int) if kind == ScorerKind.CROPPED else np.zeros(len(y), dtype=int)
    n_heads = PlannerSettings.THETA_BINS if kind == ScorerKind.CROPPED else 1
    if len(y) < MIN_TRAINING_EXAMPLES:
        raise DegenerateDataError(MESSAGES["TOO_FEW_EXAMPLES"].format(minimum=MIN_TRAINING_EXAMPLES, count=len(y)))
    if y.all() or not y.any():
        raise DegenerateDataError(MESSAGES["SINGLE_CLASS"])

    gen = as_generator(seed, "training")
    train, holdout = balanced_split(y, hyper.holdout_fraction, gen)
    Xt = X[train]
    mean = Xt.mean(axis=0)
    scale = Xt.std(axis=0)
    scale = np.where(scale > 1e-8, scale, 1.0)
    W, b, history = _descend(
        (Xt - mean) / scale,
        y[train].astype(float),
        bins[train],
        np.zeros((n_heads, X.shape[1])),
        np.zeros(n_heads),
        hyper,
        gen,
    )
    accuracy = _holdout_accuracy(ScorerModel(kind, mean, scale, W, b, crop_size), X, bins, y, holdout)
    logger.info(f"Trained {kind.value} scorer on {len(train)} examples, held-out balanced accuracy {accuracy:.3f}")
    return ScorerModel(kind, mean, scale, W, b, crop_size, accuracy=accuracy, loss_history=history)


def finetune_scorer(
    base: ScorerModel,
    features: np.ndarray,
    theta_bins: np.ndarray,
    labels: np.ndarray,
    hyper: Optional[TrainingConfig] = None,
    seed: RandomSource = 0,
) -> ScorerModel:
    """Continue training ``base`` on data from another cell, keeping its standardization."""
    hyper = hyper or TrainingConfig(epochs=10)
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=bool)
    if y.all() or not y.any():
        raise DegenerateDataError(MESSAGES["SINGLE_CLASS"])
    bins = np.asarray(theta_bins, dtype=int) if base.kind == ScorerKind.CROPPED else np.zeros(len(y), dtype=int)
    gen = as_generator(seed, "training")
    train, holdout = balanced_split(y, hyper.holdout_fraction, gen)
    W, b, history = _descend(
        (X[train] - base.mean) / base.scale,
        y[train].astype(float),
        bins[train],
        base.weights,
        base.bias,
        hyper,
        gen,
        base.loss_history,
    )
    accuracy = _holdout_accuracy(_with_params(base, W, b, history, base.accuracy), X, bins, y, holdout)
    logger.info(f"Fine-tuned {base.kind.value} scorer on {len(train)} examples, accuracy {accuracy:.3f}")
    return _with_params(base, W, b, history, accuracy)


def _with_params(
    base: ScorerModel, weights: np.ndarray, bias: np.ndarray, history: List[float], accuracy: float
) -> ScorerModel:
    return ScorerModel(
        base.kind, base.mean, base.scale, weights, bias, base.crop_size, base.theta_bins, accuracy, history
    )


# --- selection ----------------------------------------------------------------------------


def pick_top_k(
    poses: np.ndarray, scores: np.ndarray, seed: RandomSource, top_k: int = PlannerSettings.TOP_K
) -> GraspPose:
    """Uniform choice among the ``top_k`` highest scores; ties keep candidate order."""
    if len(poses) == 0:
        raise NoTargetError(MESSAGES["NO_CANDIDATES"])
    gen = as_generator(seed, "planner")
    best = np.argsort(-np.asarray(scores, dtype=float), kind="stable")[:top_k]
    return GraspPose.from_array(poses[int(best[int(gen.integers(len(best)))])])


def score_candidates(
    model: ScorerModel, depth: DepthImage, poses: np.ndarray, context: FeatureContext
) -> Tuple[np.ndarray, np.ndarray]:
    """Scores for the in-view subset of ``poses``; returns (poses kept, scores)."""
    features, in_view = candidate_features(depth, poses, model.kind, context)
    kept = poses[in_view]
    return kept, model.predict_proba(features[in_view], kept[:, 3])


def plan_learned(
    targets: Sequence[ClusterTarget],
    depth: DepthImage,
    model: ScorerModel,
    seed: RandomSource,
    context: FeatureContext,
    n_per_cluster: int = PlannerSettings.CANDIDATES_PER_CLUSTER,
    top_k: int = PlannerSettings.TOP_K,
) -> GraspPose:
    """Score every sampled candidate and pick among the best few."""
    if not targets:
        raise NoTargetError(MESSAGES["NO_CLUSTERS"])
    gen = as_generator(seed, "planner")
    poses, _ = sample_candidate_array(targets, n_per_cluster, gen)
    kept, scores = score_candidates(model, depth, poses, context)
    return pick_top_k(kept, scores, gen, top_k)


# --- planner objects ----------------------------------------------------------------------


class GraspPlanner:
    """Common interface the benchmark drives."""

    name: PlannerName

    def plan(self, observation: Observation, seed: RandomSource) -> GraspPose:
        raise NotImplementedError


class RandomXYZThetaPlanner(GraspPlanner):
    name = PlannerName.RANDOM_XYZ_THETA

    def __init__(self, region: Tuple[float, float, float] = PlannerSettings.RANDOM_REGION):
        self.region = region

    def plan(self, observation: Observation, seed: RandomSource) -> GraspPose:
        return plan_random_xyztheta(observation.targets, seed, self.region)


class RandomThetaPlanner(GraspPlanner):
    name = PlannerName.RANDOM_THETA

    def plan(self, observation: Observation, seed: RandomSource) -> GraspPose:
        return plan_random_theta(observation.targets, seed)


class PrincipalAxisPlanner(GraspPlanner):
    name = PlannerName.PRINCIPAL_AXIS

    def __init__(self, top_k: int = PlannerSettings.TOP_K):
        self.top_k = top_k

    def plan(self, observation: Observation, seed: RandomSource) -> GraspPose:
        return plan_principal_axis(observation.targets, seed, self.top_k)


class LearnedPlanner(GraspPlanner):
    def __init__(
        self,
        model: ScorerModel,
        n_per_cluster: int = PlannerSettings.CANDIDATES_PER_CLUSTER,
        top_k: int = PlannerSettings.TOP_K,
    ):
        self.model = model
        self.name = PlannerName.CROPPED if model.kind == ScorerKind.CROPPED else PlannerName.FULL
        self.n_per_cluster = n_per_cluster
        self.top_k = top_k

    def plan(self, observation: Observation, seed: RandomSource) -> GraspPose:
        if observation.depth is None or observation.context is None:
            raise InvalidArgumentError("Learned planners need the depth image and feature context", module="planners")
        context = observation.context
        if context.crop_size != self.model.crop_size:
            context = replace(context, crop_size=self.model.crop_size)
        return plan_learned(
            observation.targets,
            observation.depth,
            self.model,
            seed,
            context,
            self.n_per_cluster,
            self.top_k,
        )


class OraclePlanner(GraspPlanner):
    """Scores candidates with the ground-truth grasp outcome; an upper reference for the scorers."""

    name = PlannerName.ORACLE

    def __init__(
        self,
        gripper: Optional[GripperSpec] = None,
        d_slip: float = GripperDefaults.SLIP_DISTANCE,
        n_per_cluster: int = PlannerSettings.CANDIDATES_PER_CLUSTER,
        top_k: int = PlannerSettings.TOP_K,
    ):
        self.gripper = gripper or GripperSpec()
        self.d_slip = d_slip
        self.n_per_cluster = n_per_cluster
        self.top_k = top_k

    def plan(self, observation: Observation, seed: RandomSource) -> GraspPose:
        if observation.scene is None:
            raise InvalidArgumentError("The oracle planner needs the ground-truth scene", module="planners")
        if not observation.targets:
            raise NoTargetError(MESSAGES["NO_CLUSTERS"])
        gen = as_generator(seed, "planner")
        poses, _ = sample_candidate_array(observation.targets, self.n_per_cluster, gen)
        result = grasp_success_batch(
            observation.scene, poses[:, 0], poses[:, 1], poses[:, 2], poses[:, 3], self.gripper, self.d_slip
        )
        return pick_top_k(poses, result.success.astype(float), gen, self.top_k)


class NullPlanner(GraspPlanner):
    """Always reaches for an empty corner; the floor of every success metric."""

    name = PlannerName.NULL

    def plan(self, observation: Observation, seed: RandomSource) -> GraspPose:
        return GraspPose(Workspace.X_MIN + 1.0, Workspace.Y_MAX - 1.0, NULL_TARGET_HEIGHT, 0.0)


def make_planner(
    name: PlannerName,
    model: Optional[ScorerModel] = None,
    gripper: Optional[GripperSpec] = None,
    d_slip: float = GripperDefaults.SLIP_DISTANCE,
    n_per_cluster: int = PlannerSettings.CANDIDATES_PER_CLUSTER,
    top_k: int = PlannerSettings.TOP_K,
) -> GraspPlanner:
    """Build a planner by its command-line name.

    Raises:
        InvalidArgumentError: When a learned planner is requested without a model of the matching kind.
    """
    name = PlannerName(name)
    if name == PlannerName.RANDOM_XYZ_THETA:
        return RandomXYZThetaPlanner()
    if name == PlannerName.RANDOM_THETA:
        return RandomThetaPlanner()
    if name == PlannerName.PRINCIPAL_AXIS:
        return PrincipalAxisPlanner(top_k)
    if name == PlannerName.ORACLE:
        return OraclePlanner(gripper, d_slip, n_per_cluster, top_k)
    if name == PlannerName.NULL:
        return NullPlanner()
    expected = ScorerKind.CROPPED if name == PlannerName.CROPPED else ScorerKind.FULL
    if model is None or model.kind != expected:
        raise InvalidArgumentError(f"Planner '{name.value}' needs a trained {expected.value} scorer", module="planners")
    return LearnedPlanner(model, n_per_cluster, top_k)
