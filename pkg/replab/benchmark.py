"""Benchmark - random data collection, bin-clearing episodes, CSR curves and the cross-cell experiments."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation
from sklearn.metrics import balanced_accuracy_score

from .calibration import AlignmentResult, align_cell_camera, calibration_error, synthesize_correspondences
from .camera import render
from .constants import FailureReason, ObjectProfile, PlannerSettings, ScorerKind
from .exceptions import DegenerateInputError, InvalidArgumentError, NoTargetError
from .geometry import GraspPose, RandomSource, RigidTransform, Seed
from .perception import clustering_failed
from .planners import (
    FeatureContext,
    GraspPlanner,
    ScorerModel,
    TrainingConfig,
    balanced_split,
    candidate_features,
    finetune_scorer,
    plan_random_xyztheta,
    theta_bin,
    train_scorer,
)
from .records import ClusterSummary, GraspRecord
from .scene import Scene, evaluation_object_set, generate_training_set, reference_scene, scatter_with_retry, sweep
from .services.config_service import CellConfig
from .workcell import Workcell, as_seed

logger = logging.getLogger(__name__)

__all__ = [
    "GraspRecord",
    "AttemptRecord",
    "EpisodeLog",
    "CsrCurve",
    "collect_random_grasps",
    "collect_sharded",
    "run_episode",
    "run_episodes",
    "csr",
    "aggregate_runs",
    "episode_issues",
    "build_aligned_cell",
    "reproducibility_experiment",
    "ablation",
    "record_features",
    "train_from_records",
    "finetune_from_records",
]

MISALIGNED_ERROR = 2.0
# Attempts in a row that observe nothing before collection reshuffles the scene
EMPTY_VIEW_LIMIT = 5


# --- data collection ----------------------------------------------------------------------


def collect_random_grasps(
    cell: CellConfig,
    n: int,
    seed: int,
    workcell: Optional[Workcell] = None,
    on_attempt: Optional[Callable[[GraspRecord, Scene], None]] = None,
) -> List[GraspRecord]:
    """Random-perturbation grasps on the training pool, labelled by the outcome model.

    The scene is re-dumped every ``reset_every`` attempts or when fewer than
    ``min_objects`` remain. ``on_attempt`` sees each record with the scene
    the grasp ran on.
    """
    if n < 1:
        raise InvalidArgumentError(f"Collection needs n >= 1, got {n}", module="benchmark")
    root = Seed(int(seed))
    wc = workcell or Workcell(cell, root.child("calibrate"))
    pool = generate_training_set(cell.object_set_seed, soft_fraction=cell.soft_fraction)
    scene_gen = root.stream("scene")
    per_scene = min(cell.episode_objects, len(pool))

    records: List[GraspRecord] = []
    scene: Optional[Scene] = None
    since_reset = 0
    empty_views = 0
    step = 0
    while len(records) < n:
        if scene is None or since_reset >= cell.reset_every or len(scene) < cell.min_objects:
            picks = scene_gen.choice(len(pool), size=per_scene, replace=False)
            scene = scatter_with_retry([pool[int(i)] for i in picks], scene_gen)
            since_reset = 0
        attempt_seed = root.child("attempt", step)
        step += 1
        obs = wc.observe(scene, attempt_seed)
        if not obs.targets:
            empty_views += 1
            if empty_views >= EMPTY_VIEW_LIMIT:
                scene, empty_views = None, 0
            continue
        empty_views = 0
        assert obs.depth is not None
        pose = plan_random_xyztheta(obs.targets, attempt_seed, cell.random_region)
        before = scene
        outcome, achieved, scene = wc.attempt(scene, pose, attempt_seed)
        since_reset += 1

        nearest = min(obs.targets, key=lambda t: math.hypot(t.stats.center.x - pose.x, t.stats.center.y - pose.y))
        stats = nearest.stats
        record = GraspRecord(
            cell_id=cell.cell_id,
            ordinal=len(records),
            seed=root.value,
            pose=pose,
            success=outcome.success,
            achieved=(achieved.x, achieved.y, achieved.z) if achieved else (math.nan, math.nan, math.nan),
            cluster=ClusterSummary(
                (stats.center.x, stats.center.y, stats.center.z),
                stats.eigenvalues,
                stats.major_angle,
                len(nearest.cluster),
            ),
            depth=obs.depth.depth,
            view=wc.view,
        )
        records.append(record)
        if on_attempt is not None:
            on_attempt(record, before)

    rate = sum(r.success for r in records) / len(records)
    logger.info(f"Cell {cell.cell_id}: collected {len(records)} grasps, success rate {rate:.3f}")
    return records


def collect_sharded(cells: Sequence[CellConfig], n: int, seed: int, workers: int = 1) -> List[GraspRecord]:
    """Collect ``n`` grasps on every cell in parallel and merge by (cell id, ordinal)."""
    ids = [c.cell_id for c in cells]
    if len(set(ids)) != len(ids):
        raise InvalidArgumentError(f"Sharded collection needs distinct cell ids, got {ids}", module="benchmark")
    root = Seed(int(seed))
    shard_seeds = [root.child("cell", c.cell_id).value for c in cells]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        shards = list(pool.map(lambda args: collect_random_grasps(args[0], n, args[1]), zip(cells, shard_seeds)))
    return merge_records(shards)


def merge_records(shards: Sequence[Sequence[GraspRecord]]) -> List[GraspRecord]:
    merged = sorted((r for shard in shards for r in shard), key=lambda r: (r.cell_id, r.ordinal))
    for a, b in zip(merged, merged[1:]):
        if (a.cell_id, a.ordinal) == (b.cell_id, b.ordinal):
            raise InvalidArgumentError(f"Duplicate record (cell {a.cell_id}, ordinal {a.ordinal})", module="benchmark")
    return merged


# --- episodes -----------------------------------------------------------------------------


@dataclass(frozen=True)
class AttemptRecord:
    """One attempt of an episode.

    ``pose`` is None when nothing could be planned. ``sweep`` names the
    trigger of a sweep run during this attempt: ``"clustering"`` before
    planning, ``"failures"`` after the attempt.
    """

    index: int
    pose: Optional[GraspPose]
    success: bool
    reason: Optional[FailureReason]
    object_id: Optional[int]
    remaining: int
    sweep: Optional[str] = None


@dataclass(frozen=True, eq=False)
class EpisodeLog:
    planner: str
    profile: ObjectProfile
    seed: int
    initial_scene: Scene
    attempts: List[AttemptRecord] = field(default_factory=list)

    @property
    def initial_objects(self) -> int:
        return len(self.initial_scene)

    @property
    def successes(self) -> int:
        return sum(a.success for a in self.attempts)

    @property
    def cleared(self) -> bool:
        return bool(self.attempts) and self.attempts[-1].remaining == 0


@dataclass(frozen=True)
class CsrCurve:
    """Cumulative successes after each attempt."""

    counts: Tuple[int, ...]

    def __post_init__(self) -> None:
        steps = np.diff(np.concatenate([[0], self.counts]))
        if np.any((steps != 0) & (steps != 1)):
            raise InvalidArgumentError("CSR curves grow by 0 or 1 per attempt", module="benchmark")

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def final(self) -> int:
        return self.counts[-1] if self.counts else 0

    def padded(self, length: int) -> np.ndarray:
        out = np.full(length, self.final, dtype=float)
        n = min(length, len(self.counts))
        out[:n] = self.counts[:n]
        return out


def run_episode(
    cell: CellConfig,
    planner: GraspPlanner,
    object_profile: ObjectProfile,
    seed: int,
    workcell: Optional[Workcell] = None,
) -> EpisodeLog:
    """Bin clearing: scatter the fixed test objects and grasp until clear or out of attempts.

    A sweep runs when clustering fails (too few or far too many clusters) and
    after ``sweep_after`` consecutive failed attempts.
    """
    root = Seed(int(seed))
    wc = workcell or Workcell(cell, root.child("calibrate"))
    profile = ObjectProfile(object_profile)
    objects = evaluation_object_set(profile, cell.object_set_seed, cell.episode_objects, cell.soft_fraction)
    scene = scatter_with_retry(objects, root.stream("scene"))
    log = EpisodeLog(planner.name.value, profile, root.value, scene)

    failures = 0
    for index in range(cell.max_attempts):
        if len(scene) == 0:
            break
        step = root.child("attempt", index)
        obs = wc.observe(scene, step)
        swept: Optional[str] = None
        if clustering_failed(obs.targets, len(scene), cell.cluster_excess):
            logger.debug(f"Attempt {index + 1}: clustering failed with {len(obs.targets)} clusters, sweeping")
            scene = sweep(scene, step.child("sweep"))
            obs = wc.observe(scene, step.child("after-sweep"))
            swept, failures = "clustering", 0

        try:
            pose: Optional[GraspPose] = planner.plan(obs, step)
        except NoTargetError:
            pose = None
        if pose is None:
            success, reason, object_id = False, None, None
        else:
            outcome, _, scene = wc.attempt(scene, pose, step)
            success, reason, object_id = outcome.success, outcome.reason, outcome.object_id

        failures = 0 if success else failures + 1
        if failures >= cell.sweep_after and len(scene) > 0:
            scene = sweep(scene, step.child("sweep-failures"))
            swept, failures = "failures", 0
        log.attempts.append(AttemptRecord(index, pose, success, reason, object_id, len(scene), swept))
        logger.debug(f"Attempt {index + 1}: success={success} reason={reason} remaining={len(scene)}")

    logger.info(
        f"Episode {planner.name.value}/{profile.value} seed {root.value}: "
        f"{log.successes}/{log.initial_objects} in {len(log.attempts)} attempts"
    )
    return log


def run_episodes(
    cell: CellConfig,
    planner: GraspPlanner,
    object_profile: ObjectProfile,
    seeds: Sequence[int],
    workers: int = 1,
    workcell: Optional[Workcell] = None,
) -> List[EpisodeLog]:
    """Independent episodes, one per seed, returned in seed order."""
    wc = workcell or Workcell(cell, Seed(int(seeds[0]) if seeds else 0).child("calibrate"))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(lambda s: run_episode(cell, planner, object_profile, s, wc), seeds))


def csr(log: EpisodeLog) -> CsrCurve:
    return CsrCurve(tuple(int(v) for v in np.cumsum([int(a.success) for a in log.attempts])))


def aggregate_runs(curves: Sequence[CsrCurve], length: int = 60) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Pointwise mean of curves padded to ``length`` by their final value.

    Raises:
        DegenerateInputError: If ``curves`` is empty.
    """
    if not curves:
        raise DegenerateInputError("aggregate_runs needs at least one curve")
    runs = [c.padded(length) for c in curves]
    return np.mean(runs, axis=0), runs


def episode_issues(log: EpisodeLog, cell: CellConfig) -> List[str]:
    """Protocol violations in a log; empty when the episode is well formed."""
    issues = []
    if len(log.attempts) > cell.max_attempts:
        issues.append(f"{len(log.attempts)} attempts exceed {cell.max_attempts}")
    remaining = log.initial_objects
    streak = 0
    for a in log.attempts:
        if a.remaining > remaining:
            issues.append(f"attempt {a.index}: remaining count grew")
        if a.success and a.remaining != remaining - 1:
            issues.append(f"attempt {a.index}: success did not remove exactly one object")
        if a.sweep == "clustering":
            streak = 0
        streak = 0 if a.success else streak + 1
        if a.sweep == "failures":
            if streak < cell.sweep_after:
                issues.append(f"attempt {a.index}: failure sweep after {streak} failures")
            streak = 0
        elif a.sweep not in (None, "clustering"):
            issues.append(f"attempt {a.index}: unknown sweep trigger {a.sweep!r}")
        remaining = a.remaining
    empty_at = [a.index for a in log.attempts if a.remaining == 0]
    if empty_at and empty_at[0] != log.attempts[-1].index:
        issues.append("episode continued after the scene was cleared")
    if not empty_at and len(log.attempts) < cell.max_attempts:
        issues.append("episode ended early with objects left")
    counts = csr(log).counts
    if counts and counts[-1] > log.initial_objects:
        issues.append("CSR exceeds the object count")
    return issues


# --- cross-cell reproducibility -----------------------------------------------------------


def perturb_camera(pose: RigidTransform, translation: float, rotation_deg: float, seed: RandomSource) -> RigidTransform:
    """Move a camera by ``translation`` cm and ``rotation_deg`` degrees in random directions."""
    gen = as_seed(seed).stream("mounting")
    shift = gen.standard_normal(3)
    axis = gen.standard_normal(3)
    shift *= translation / np.linalg.norm(shift)
    axis *= math.radians(rotation_deg) / np.linalg.norm(axis)
    offset = RigidTransform.from_rotation(Rotation.from_rotvec(axis), shift)
    return offset.compose(pose)


@dataclass(frozen=True)
class AlignedCell:
    cell: CellConfig
    alignment: Optional[AlignmentResult]
    mounted_pose: RigidTransform


def build_aligned_cell(
    cell_a: CellConfig,
    seed: int,
    translation: float = 1.0,
    rotation_deg: float = 2.0,
    align: bool = True,
    tolerance: float = 0.3,
) -> AlignedCell:
    """Second cell built from the first: a slightly off camera mount, then alignment.

    Cell B inherits cell A's calibration matrix and noise model. With
    ``align`` the operator nudges the camera until it sees the reference
    fixture the way cell A does.

    Raises:
        AlignmentFailedError: If alignment does not reach ``tolerance``.
    """
    if cell_a.calibration is None or cell_a.noise_model is None:
        cell_a = Workcell(cell_a, Seed(int(seed)).child("calibrate")).cell
    mounted = perturb_camera(cell_a.camera_pose, translation, rotation_deg, seed)
    result: Optional[AlignmentResult] = None
    pose = mounted
    if align:
        k = cell_a.intrinsics.scaled(0.5)
        _, reference = render(reference_scene(), cell_a.camera_pose, k, 0, noise_sigma=0.0)
        result = align_cell_camera(reference, mounted, k, tolerance=tolerance)
        pose = result.pose
    cell_b = replace(cell_a, cell_id=cell_a.cell_id + 1, camera_pose=pose)
    return AlignedCell(cell_b, result, mounted)


@dataclass(frozen=True)
class ReproducibilityReport:
    calibration_error_a: float
    calibration_error_b: float
    finals_a: Tuple[int, ...]
    finals_b: Tuple[int, ...]
    mean_a: np.ndarray = field(compare=False)
    mean_b: np.ndarray = field(compare=False)

    @property
    def difference(self) -> float:
        return float(np.mean(self.finals_a) - np.mean(self.finals_b))

    @property
    def misaligned(self) -> bool:
        return self.calibration_error_b > MISALIGNED_ERROR


def reproducibility_experiment(
    cell_a: CellConfig,
    cell_b: CellConfig,
    planner: GraspPlanner,
    runs: int,
    seed: int,
    profile: ObjectProfile = ObjectProfile.SEEN,
    workers: int = 1,
) -> ReproducibilityReport:
    """Same planner, same episode seeds, two cells; compares calibration error and final CSR."""
    if runs < 1:
        raise InvalidArgumentError(f"runs must be >= 1, got {runs}", module="benchmark")
    root = Seed(int(seed))
    wc_a = Workcell(cell_a, root.child("calibrate"))
    wc_b = Workcell(cell_b, root.child("calibrate"))
    errors = []
    for wc in (wc_a, wc_b):
        check = synthesize_correspondences(
            wc.cell.camera_pose, wc.cell.intrinsics, wc.cell.calibration_pairs, root.child("heldout", wc.cell.cell_id)
        )
        errors.append(calibration_error(wc.calibration, check))
    seeds = [root.child("run", i).value for i in range(runs)]
    curves = []
    for wc in (wc_a, wc_b):
        logs = run_episodes(wc.cell, planner, profile, seeds, workers, wc)
        curves.append([csr(log) for log in logs])
    mean_a, _ = aggregate_runs(curves[0], cell_a.max_attempts)
    mean_b, _ = aggregate_runs(curves[1], cell_b.max_attempts)
    report = ReproducibilityReport(
        errors[0],
        errors[1],
        tuple(c.final for c in curves[0]),
        tuple(c.final for c in curves[1]),
        mean_a,
        mean_b,
    )
    if report.misaligned:
        logger.warning(f"Cell {cell_b.cell_id} calibration error {errors[1]:.2f} cm; camera looks misaligned")
    logger.info(
        f"Reproducibility: calibration {errors[0]:.3f}/{errors[1]:.3f} cm, CSR difference {report.difference:.2f}"
    )
    return report


# --- scorer training on records -----------------------------------------------------------


def record_features(
    records: Sequence[GraspRecord], kind: ScorerKind, crop_size: int = PlannerSettings.CROP_SIZE
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(features, theta bins, labels) derived from the stored depth images.

    Features are built exactly as the scorers build them at planning time,
    with the camera view each record was collected under.
    """
    if not records:
        raise DegenerateInputError("No records to build features from")
    poses = np.array([r.pose.as_array() for r in records])
    labels = np.array([r.success for r in records], dtype=bool)
    contexts: Dict[int, FeatureContext] = {}
    rows = []
    for record, pose in zip(records, poses):
        view = record.view
        if id(view) not in contexts:
            contexts[id(view)] = FeatureContext(view.calibration, view.intrinsics, view.floor_depth(), crop_size)
        features, _ = candidate_features(record.depth_image(), pose[None, :], kind, contexts[id(view)])
        rows.append(features[0])
    return np.array(rows, dtype=float), theta_bin(poses[:, 3]), labels


def train_from_records(
    records: Sequence[GraspRecord],
    kind: ScorerKind,
    seed: int,
    hyper: Optional[TrainingConfig] = None,
    crop_size: int = PlannerSettings.CROP_SIZE,
) -> ScorerModel:
    features, bins, labels = record_features(records, kind, crop_size)
    return train_scorer(features, bins, labels, kind, hyper, seed, crop_size)


def finetune_from_records(
    base: ScorerModel, records: Sequence[GraspRecord], seed: int, hyper: Optional[TrainingConfig] = None
) -> ScorerModel:
    features, bins, labels = record_features(records, base.kind, base.crop_size)
    return finetune_scorer(base, features, bins, labels, hyper, seed)


@dataclass(frozen=True)
class AblationRow:
    size: int
    accuracy: float


def ablation(
    dataset: Sequence[GraspRecord],
    sizes: Sequence[int],
    kind: ScorerKind,
    seed: int,
    hyper: Optional[TrainingConfig] = None,
    holdout_fraction: float = 0.2,
) -> List[AblationRow]:
    """Balanced held-out accuracy of scorers trained on growing prefixes of one shuffled pool.

    The held-out split is drawn once and is class-balanced; every training
    subset is a prefix of the same shuffled remainder.
    """
    if not sizes:
        raise InvalidArgumentError("ablation needs at least one size", module="benchmark")
    if max(sizes) > len(dataset):
        raise InvalidArgumentError(
            f"Largest ablation size {max(sizes)} exceeds the {len(dataset)} records", module="benchmark"
        )
    features, bins, labels = record_features(dataset, kind)
    gen = Seed(int(seed)).stream("training")
    pool, holdout = balanced_split(labels, holdout_fraction, gen)
    pool = gen.permutation(pool)

    rows = []
    for size in sizes:
        if size > len(pool):
            logger.warning(f"Ablation size {size} capped at the {len(pool)} records outside the held-out split")
        subset = pool[: min(size, len(pool))]
        model = train_scorer(features[subset], bins[subset], labels[subset], kind, hyper, seed)
        prob = model.predict_proba(features[holdout], np.array([r.pose.theta for r in dataset])[holdout])
        accuracy = float(balanced_accuracy_score(labels[holdout], prob > 0.5))
        rows.append(AblationRow(int(size), accuracy))
        logger.info(f"Ablation {kind.value} size {size}: balanced accuracy {accuracy:.3f}")
    return rows
