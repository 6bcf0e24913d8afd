"""Reaching - joint-velocity reaching environment, Jacobian oracle and a cross-entropy-method learner.

The environment follows the usual reset/step/seed/close contract so an
external RL learner can be attached; :func:`train_reacher` is the built-in
derivative-free learner.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import linalg

from .arm import ArmModel, JointState, fk_batch, ik_vertical, step_velocity_batch
from .constants import ReachSettings, Workspace
from .exceptions import InvalidArgumentError, ReachabilityError
from .geometry import RandomSource, Vec3, as_generator

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
# Policy features: six joints plus the error in (radius, yaw, height)
FEATURES = 9
JOINTS = 6
ERROR_SLICE = slice(6, 9)
# Off the base axis, where yaw still moves the tool
START_POINT = (10.0, 0.0, 8.0)
# Yaw enters the task vector through this lever arm (cm per rad)
YAW_LEVER = 10.0
# Damping of the least-squares step, centimetres
DLS_DAMPING = 1.0
# Below this horizontal range the target bearing is undefined
MIN_BEARING_RANGE = 0.25
# Share of the episode the base may spend turning before the arm reaches over its back
YAW_BUDGET = 0.9
LIMIT_SLACK = 1e-9


@dataclass(frozen=True)
class ReachConfig:
    horizon: int = ReachSettings.HORIZON
    dt: float = ReachSettings.DT
    epochs: int = ReachSettings.EPOCHS
    population: int = 64
    elites: int = 8
    eval_targets: int = ReachSettings.EVAL_TARGETS
    init_std_error: float = 1.0
    init_std_other: float = 0.1
    min_std: float = 0.01


@dataclass(frozen=True, eq=False)
class ReachObservation:
    joints: np.ndarray
    end_effector: Vec3

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.joints, self.end_effector.as_array()])


@dataclass(frozen=True)
class ReachEpisodeConfig:
    """One reaching task.

    ``random_start`` makes every reset draw a tool-down start pose from the
    environment's seeded stream; it takes precedence over ``initial``.
    """

    target: Vec3
    horizon: int = ReachSettings.HORIZON
    dt: float = ReachSettings.DT
    initial: Optional[JointState] = None
    random_start: bool = False


def home_state(model: ArmModel) -> JointState:
    """Tool-down pose every episode starts from."""
    return ik_vertical(model, Vec3(*START_POINT), 0.0)


def _reachable_point(model: ArmModel, gen: np.random.Generator) -> np.ndarray:
    while True:
        p = np.array(
            [
                gen.uniform(Workspace.X_MIN + 5.0, Workspace.X_MAX - 5.0),
                gen.uniform(Workspace.Y_MIN + 5.0, Workspace.Y_MAX - 5.0),
                gen.uniform(2.0, 12.0),
            ]
        )
        try:
            ik_vertical(model, Vec3.from_array(p), 0.0)
        except ReachabilityError:
            continue
        return p


def evaluation_targets(model: ArmModel, count: int, seed: RandomSource) -> np.ndarray:
    """Fixed reachable target points inside the cell, shape (count, 3)."""
    gen = as_generator(seed, "reach-targets")
    return np.array([_reachable_point(model, gen) for _ in range(count)]).reshape(count, 3)


def random_start(model: ArmModel, seed: RandomSource) -> JointState:
    """Tool-down pose over a random reachable point with a random jaw heading."""
    gen = as_generator(seed, "reach-start")
    point = _reachable_point(model, gen)
    return ik_vertical(model, Vec3.from_array(point), float(gen.uniform(0.0, np.pi)))


class VectorReachEnv:
    """N independent reaching episodes stepped together."""

    def __init__(
        self,
        model: ArmModel,
        targets: np.ndarray,
        horizon: int = ReachSettings.HORIZON,
        dt: float = ReachSettings.DT,
        initial: Optional[np.ndarray] = None,
    ):
        self.model = model
        self.targets = np.atleast_2d(np.asarray(targets, dtype=float))
        self.horizon = horizon
        self.dt = dt
        self.restart_from(home_state(model).as_array() if initial is None else initial)
        self.q = self._initial.copy()
        self.t = 0

    @property
    def num_envs(self) -> int:
        return len(self.targets)

    def restart_from(self, initial: np.ndarray) -> None:
        """Joint state the next :meth:`reset` returns to."""
        start = np.asarray(initial, dtype=float)
        self._initial = np.broadcast_to(start, (len(self.targets), JOINTS)).copy()

    def reset(self) -> np.ndarray:
        self.q = self._initial.copy()
        self.t = 0
        return self.observe()

    def observe(self) -> np.ndarray:
        return np.hstack([self.q, fk_batch(self.model, self.q)])

    def distances(self) -> np.ndarray:
        return np.linalg.norm(fk_batch(self.model, self.q) - self.targets, axis=1)

    def step(self, actions: np.ndarray) -> Tuple[np.ndarray, np.ndarray, bool]:
        if self.t >= self.horizon:
            raise InvalidArgumentError("Episode is over; call reset()", module="reaching")
        self.q = step_velocity_batch(self.model, self.q, actions, self.dt)
        self.t += 1
        obs = self.observe()
        return obs, -np.linalg.norm(obs[:, 6:9] - self.targets, axis=1), self.t >= self.horizon


class ReachEnv:
    """Single reaching episode: observe joints and tool tip, act with joint velocities.

    Reward is the negative tool-to-target distance in centimetres. After
    :meth:`close` the environment refuses to reset or step.
    """

    def __init__(self, model: ArmModel, config: ReachEpisodeConfig, seed: RandomSource = 0):
        ik_vertical(model, config.target, 0.0)
        if config.dt <= 0.0 or config.horizon < 1:
            raise InvalidArgumentError("Reach episodes need dt > 0 and horizon >= 1", module="reaching")
        self.model = model
        self.config = config
        self._rng = as_generator(seed, "reach-start")
        self._vec: Optional[VectorReachEnv] = VectorReachEnv(
            model,
            config.target.as_array()[None, :],
            config.horizon,
            config.dt,
            None if config.initial is None else config.initial.as_array(),
        )

    def seed(self, seed: RandomSource) -> None:
        """Reseed the stream random starts are drawn from."""
        self._rng = as_generator(seed, "reach-start")

    def _env(self) -> VectorReachEnv:
        if self._vec is None:
            raise InvalidArgumentError("Reach environment is closed", module="reaching")
        return self._vec

    def _observation(self, row: np.ndarray) -> ReachObservation:
        return ReachObservation(row[:6].copy(), Vec3.from_array(row[6:9]))

    def reset(self) -> ReachObservation:
        env = self._env()
        if self.config.random_start:
            env.restart_from(random_start(self.model, self._rng).as_array())
        return self._observation(env.reset()[0])

    def step(self, action: np.ndarray) -> Tuple[ReachObservation, float, bool]:
        env = self._env()
        a = np.asarray(action, dtype=float).reshape(JOINTS)
        limit = self.model.max_velocity
        if np.any(np.abs(a) > limit):
            logger.warning(f"Clamping joint velocities to +-{limit} rad/s: {np.round(a, 3).tolist()}")
            a = np.clip(a, -limit, limit)
        obs, reward, done = env.step(a[None, :])
        return self._observation(obs[0]), float(reward[0]), done

    def close(self) -> None:
        self._vec = None
        logger.debug("Reach environment closed")


def position_jacobian(model: ArmModel, q: np.ndarray) -> np.ndarray:
    """Finite-difference Jacobian of the tool tip, shape (3, 6)."""
    q = np.asarray(q, dtype=float)
    nudged = np.tile(q, (JOINTS + 1, 1))
    nudged[1:] += np.eye(JOINTS) * FD_STEP
    ee = fk_batch(model, nudged)
    return ((ee[1:] - ee[0]) / FD_STEP).T


# --- task coordinates -----------------------------------------------------------------------


def task_coordinates(model: ArmModel, q: np.ndarray) -> np.ndarray:
    """Signed horizontal reach along the base heading, base yaw and tool height, shape (N, 3).

    The reach is negative when the tool hangs behind the base axis.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    ee = fk_batch(model, q)
    rho = (ee[:, 0] - model.base_x) * np.cos(q[:, 0]) + (ee[:, 1] - model.base_y) * np.sin(q[:, 0])
    return np.column_stack([rho, q[:, 0], ee[:, 2]])


def task_jacobian(model: ArmModel, q: np.ndarray) -> np.ndarray:
    """Finite-difference Jacobian of :func:`task_coordinates`, shape (3, 6)."""
    q = np.asarray(q, dtype=float)
    nudged = np.tile(q, (JOINTS + 1, 1))
    nudged[1:] += np.eye(JOINTS) * FD_STEP
    task = task_coordinates(model, nudged)
    return ((task[1:] - task[0]) / FD_STEP).T


def _flip_bearing(bearing: np.ndarray) -> np.ndarray:
    return np.where(bearing > 0.0, bearing - np.pi, bearing + np.pi)


def task_goal(model: ArmModel, targets: np.ndarray, yaw: np.ndarray, reverse: np.ndarray) -> np.ndarray:
    """Task coordinates of ``targets`` seen from the current base ``yaw``, shape (N, 3).

    Rows with ``reverse`` set reach over the arm's back: bearing turned by
    pi and a negative reach. Targets on the base axis keep the current yaw.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    yaw = np.asarray(yaw, dtype=float)
    dx, dy = targets[:, 0] - model.base_x, targets[:, 1] - model.base_y
    reach = np.hypot(dx, dy)
    bearing = np.arctan2(dy, dx)
    reverse = np.asarray(reverse, dtype=bool)
    bearing = np.where(reverse, _flip_bearing(bearing), bearing)
    rho = np.where(reverse, -reach, reach)
    on_axis = reach < MIN_BEARING_RANGE
    rho = np.where(on_axis, dx * np.cos(yaw) + dy * np.sin(yaw), rho)
    lo, hi = model.limits[0]
    bearing = np.clip(np.where(on_axis, yaw, bearing), lo, hi)
    return np.column_stack([rho, bearing, targets[:, 2]])


def reaches_over_back(model: ArmModel, joints: np.ndarray, target: Vec3, duration: float) -> bool:
    """Whether the base would spend most of ``duration`` turning to face the target.

    The joint limits keep the base from turning through pi, so a target just
    across that seam is reached faster over the arm's back.
    """
    dx, dy = target.x - model.base_x, target.y - model.base_y
    if np.hypot(dx, dy) < MIN_BEARING_RANGE:
        return False
    yaw = float(joints[0])
    bearing = float(np.arctan2(dy, dx))
    forward = abs(bearing - yaw)
    backward = abs(float(_flip_bearing(np.array(bearing))) - yaw)
    return forward > YAW_BUDGET * duration * model.max_velocity and backward < forward


TASK_WEIGHTS = np.array([1.0, YAW_LEVER, 1.0])


def oracle_controller(
    model: ArmModel,
    obs: ReachObservation,
    target: Vec3,
    dt: float = ReachSettings.DT,
    reverse: bool = False,
) -> np.ndarray:
    """Damped least-squares step toward ``target`` in task coordinates.

    Joints resting on a limit that the step would push further are dropped
    and the step is solved again. The velocity is the full step over ``dt``,
    scaled as a whole so no joint exceeds the velocity bound.
    """
    q = np.asarray(obs.joints, dtype=float)
    goal = task_goal(model, target.as_array()[None, :], q[None, 0], np.array([reverse]))[0]
    error = (goal - task_coordinates(model, q)[0]) * TASK_WEIGHTS
    jac = task_jacobian(model, q) * TASK_WEIGHTS[:, None]
    limits = model.limit_array
    free = np.ones(JOINTS, dtype=bool)
    step = np.zeros(JOINTS)
    for _ in range(JOINTS):
        active = jac * free
        system = active @ active.T + DLS_DAMPING**2 * np.eye(3)
        step = active.T @ linalg.solve(system, error, assume_a="pos")
        blocked = free & (
            ((q <= limits[:, 0] + LIMIT_SLACK) & (step < 0.0)) | ((q >= limits[:, 1] - LIMIT_SLACK) & (step > 0.0))
        )
        if not blocked.any():
            break
        free &= ~blocked
    velocity = step / dt
    peak = float(np.max(np.abs(velocity)))
    if peak > model.max_velocity:
        velocity *= model.max_velocity / peak
    return velocity


def policy_features(model: ArmModel, obs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Joints plus the weighted tool error in task coordinates (reach, yaw, height), all in centimetres."""
    q = obs[:, :6]
    goal = task_goal(model, targets, q[:, 0], np.zeros(len(q), dtype=bool))
    return np.column_stack([q, (goal - task_coordinates(model, q)) * TASK_WEIGHTS])


@dataclass(frozen=True, eq=False)
class AffinePolicy:
    """a = K f + b on :func:`policy_features`."""

    gain: np.ndarray
    bias: np.ndarray

    @classmethod
    def from_vector(cls, theta: np.ndarray) -> "AffinePolicy":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[: JOINTS * FEATURES].reshape(JOINTS, FEATURES), theta[JOINTS * FEATURES :])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.gain.ravel(), self.bias])

    def act(self, features: np.ndarray) -> np.ndarray:
        return features @ self.gain.T + self.bias


PARAMETERS = JOINTS * FEATURES + JOINTS


def rollout_distances(
    model: ArmModel, thetas: np.ndarray, targets: np.ndarray, config: ReachConfig, env_factory=None
) -> np.ndarray:
    """Mean final distance over ``targets`` for each parameter row of ``thetas``."""
    thetas = np.atleast_2d(thetas)
    population = len(thetas)
    tiled = np.tile(targets, (population, 1))
    factory = env_factory or (lambda t: VectorReachEnv(model, t, config.horizon, config.dt))
    env = factory(tiled)
    gains = thetas[:, : JOINTS * FEATURES].reshape(population, JOINTS, FEATURES)
    biases = thetas[:, JOINTS * FEATURES :]
    owner = np.repeat(np.arange(population), len(targets))
    obs = env.reset()
    done = False
    while not done:
        f = policy_features(model, obs, tiled)
        actions = np.einsum("nij,nj->ni", gains[owner], f) + biases[owner]
        obs, _, done = env.step(actions)
    return env.distances().reshape(population, len(targets)).mean(axis=1)


@dataclass
class LearningCurve:
    epochs: List[int] = field(default_factory=list)
    mean_distance: List[float] = field(default_factory=list)
    best_so_far: List[float] = field(default_factory=list)

    def rows(self) -> List[Tuple[int, float, float]]:
        return list(zip(self.epochs, self.mean_distance, self.best_so_far))


@dataclass(frozen=True, eq=False)
class ReacherResult:
    policy: AffinePolicy
    curve: LearningCurve
    targets: np.ndarray
    initial_distance: float


def train_reacher(
    model: ArmModel,
    epochs: int,
    seed: RandomSource,
    config: Optional[ReachConfig] = None,
    targets: Optional[np.ndarray] = None,
    env_factory: Optional[Callable[[np.ndarray], VectorReachEnv]] = None,
) -> ReacherResult:
    """Cross-entropy search over an affine policy.

    Each epoch samples a population from a diagonal Gaussian, keeps the
    elites with the lowest mean final distance and refits the Gaussian to
    them. The curve records the distance of the mean policy per epoch and the
    best distance seen so far.
    """
    if epochs < 1:
        raise InvalidArgumentError(f"epochs must be >= 1, got {epochs}", module="reaching")
    config = config or ReachConfig()
    gen = as_generator(seed, "reach")
    if targets is None:
        targets = evaluation_targets(model, config.eval_targets, gen)

    mean = np.zeros(PARAMETERS)
    std = np.full((JOINTS, FEATURES), config.init_std_other)
    std[:, ERROR_SLICE] = config.init_std_error
    std = np.concatenate([std.ravel(), np.full(JOINTS, config.init_std_other)])

    def evaluate(thetas: np.ndarray) -> np.ndarray:
        return rollout_distances(model, thetas, targets, config, env_factory)

    initial = float(evaluate(mean[None, :])[0])
    best_theta, best = mean.copy(), initial
    curve = LearningCurve()
    for epoch in range(1, epochs + 1):
        population = mean + std * gen.standard_normal((config.population, PARAMETERS))
        scores = evaluate(population)
        elite = population[np.argsort(scores, kind="stable")[: config.elites]]
        mean = elite.mean(axis=0)
        std = elite.std(axis=0) + config.min_std

        mean_score = float(evaluate(mean[None, :])[0])
        for theta, score in ((population[int(np.argmin(scores))], float(scores.min())), (mean, mean_score)):
            if score < best:
                best_theta, best = theta.copy(), score
        curve.epochs.append(epoch)
        curve.mean_distance.append(mean_score)
        curve.best_so_far.append(best)
        logger.info(f"Reach epoch {epoch}/{epochs}: mean policy {mean_score:.3f} cm, best {best:.3f} cm")

    return ReacherResult(AffinePolicy.from_vector(best_theta), curve, targets, initial)


def oracle_rollout(model: ArmModel, config: ReachEpisodeConfig, seed: RandomSource = 0) -> List[float]:
    """Distances along one episode driven by :func:`oracle_controller`.

    Whether to reach over the arm's back is settled once from the start pose.
    """
    env = ReachEnv(model, config, seed)
    obs = env.reset()
    reverse = reaches_over_back(model, obs.joints, config.target, config.horizon * config.dt)
    distances = [obs.end_effector.distance_to(config.target)]
    done = False
    while not done:
        obs, reward, done = env.step(oracle_controller(model, obs, config.target, config.dt, reverse))
        distances.append(-reward)
    env.close()
    return distances
