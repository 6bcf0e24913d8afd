import logging
import math

import numpy as np
import pytest

from replab.arm import ArmModel, fk, fk_batch, ik_vertical
from replab.exceptions import InvalidArgumentError, ReachabilityError
from replab.geometry import Seed, Vec3
from replab.reaching import (
    PARAMETERS,
    START_POINT,
    ReachConfig,
    ReachEnv,
    ReachEpisodeConfig,
    evaluation_targets,
    home_state,
    oracle_rollout,
    position_jacobian,
    reaches_over_back,
    rollout_distances,
    task_coordinates,
    task_jacobian,
    train_reacher,
)

ARM = ArmModel()
TINY = ReachConfig(horizon=10, population=8, elites=2, eval_targets=2)


class TestReachEnv:
    def test_episode_starts_at_home(self):
        env = ReachEnv(ARM, ReachEpisodeConfig(Vec3(10.0, 4.0, 5.0)))
        obs = env.reset()
        assert obs.end_effector.distance_to(Vec3(*START_POINT)) < 1e-6
        np.testing.assert_allclose(obs.joints, home_state(ARM).as_array())

    def test_zero_action_keeps_distance(self):
        target = Vec3(10.0, 4.0, 5.0)
        env = ReachEnv(ARM, ReachEpisodeConfig(target))
        start = env.reset().end_effector.distance_to(target)
        _, reward, done = env.step(np.zeros(6))
        assert reward == pytest.approx(-start)
        assert not done

    def test_step_after_horizon_raises(self):
        env = ReachEnv(ARM, ReachEpisodeConfig(Vec3(10.0, 4.0, 5.0), horizon=2))
        env.reset()
        env.step(np.zeros(6))
        _, _, done = env.step(np.zeros(6))
        assert done
        with pytest.raises(InvalidArgumentError):
            env.step(np.zeros(6))

    def test_reset_restarts_the_clock(self):
        env = ReachEnv(ARM, ReachEpisodeConfig(Vec3(10.0, 4.0, 5.0), horizon=1))
        env.reset()
        env.step(np.zeros(6))
        env.reset()
        _, _, done = env.step(np.zeros(6))
        assert done

    def test_oversized_actions_are_clamped(self, caplog):
        env = ReachEnv(ARM, ReachEpisodeConfig(Vec3(10.0, 4.0, 5.0)))
        start = env.reset()
        with caplog.at_level(logging.WARNING, logger="replab.reaching"):
            obs, _, _ = env.step(np.array([5.0, 0.0, 0.0, 0.0, 0.0, 0.0]))
        assert "Clamping" in caplog.text
        assert obs.joints[0] - start.joints[0] == pytest.approx(ARM.max_velocity * 0.05)

    def test_unreachable_target_rejected(self):
        with pytest.raises(ReachabilityError):
            ReachEnv(ARM, ReachEpisodeConfig(Vec3(100.0, 0.0, 0.0)))

    def test_same_seed_same_random_starts(self):
        config = ReachEpisodeConfig(Vec3(10.0, 4.0, 5.0), random_start=True)
        a, b = ReachEnv(ARM, config), ReachEnv(ARM, config)
        a.seed(Seed(5))
        b.seed(Seed(5))
        first = [a.reset().joints for _ in range(3)]
        np.testing.assert_array_equal(first, [b.reset().joints for _ in range(3)])
        assert not np.allclose(first[0], first[1])
        action = np.array([0.5, -0.2, 0.3, 0.0, 0.1, 0.0])
        assert a.step(action)[1] == b.step(action)[1]
        b.seed(Seed(6))
        assert not np.allclose(b.reset().joints, a.reset().joints)

    def test_seed_is_ignored_without_random_start(self):
        env = ReachEnv(ARM, ReachEpisodeConfig(Vec3(10.0, 4.0, 5.0)))
        env.seed(Seed(9))
        np.testing.assert_allclose(env.reset().joints, home_state(ARM).as_array())

    def test_closed_env_refuses_use(self):
        env = ReachEnv(ARM, ReachEpisodeConfig(Vec3(10.0, 4.0, 5.0)))
        env.reset()
        env.close()
        with pytest.raises(InvalidArgumentError, match="closed"):
            env.reset()
        with pytest.raises(InvalidArgumentError, match="closed"):
            env.step(np.zeros(6))


class TestOracle:
    def test_jacobian_matches_finite_motion(self):
        q = home_state(ARM).as_array()
        dq = np.array([0.01, -0.02, 0.015, 0.01, 0.0, 0.0])
        moved = fk_batch(ARM, (q + dq)[None, :])[0] - fk_batch(ARM, q[None, :])[0]
        np.testing.assert_allclose(position_jacobian(ARM, q) @ dq, moved, atol=0.05)

    def test_oracle_reaches_nearby_target(self):
        distances = oracle_rollout(ARM, ReachEpisodeConfig(Vec3(10.0, 4.0, 5.0)))
        assert len(distances) == 101
        assert distances[-1] < 1.0
        assert distances[-1] < distances[0]

    def test_task_coordinates_at_home(self):
        q = home_state(ARM).as_array()
        np.testing.assert_allclose(task_coordinates(ARM, q)[0], [START_POINT[0], 0.0, START_POINT[2]], atol=1e-9)
        np.testing.assert_allclose(task_jacobian(ARM, q)[1], [1.0, 0.0, 0.0, 0.0, 0.0, 0.0], atol=1e-6)

    def test_reaches_across_the_yaw_seam(self):
        start = ik_vertical(ARM, Vec3(-10.0, 0.5, 6.0), 0.0)
        target = Vec3(-10.0, -0.5, 6.0)
        assert reaches_over_back(ARM, start.as_array(), target, 5.0)
        assert not reaches_over_back(ARM, start.as_array(), Vec3(-10.0, 3.0, 6.0), 5.0)
        distances = oracle_rollout(ARM, ReachEpisodeConfig(target, initial=start))
        assert distances[-1] < 1.0

    @pytest.mark.slow
    def test_oracle_reaches_from_random_starts(self):
        targets = evaluation_targets(ARM, 200, Seed(11))
        starts = evaluation_targets(ARM, 200, Seed(12))
        gen = np.random.default_rng(13)
        reached = 0
        for target, start in zip(targets, starts):
            initial = ik_vertical(ARM, Vec3.from_array(start), gen.uniform(0.0, math.pi))
            distances = oracle_rollout(ARM, ReachEpisodeConfig(Vec3.from_array(target), initial=initial))
            reached += distances[-1] < 1.0
        assert reached >= 0.95 * len(targets)


class TestCem:
    def test_evaluation_targets_are_reachable(self):
        targets = evaluation_targets(ARM, 5, Seed(1))
        assert targets.shape == (5, 3)
        for p in targets:
            tip, _ = fk(ARM, ik_vertical(ARM, Vec3.from_array(p), 0.0))
            assert tip.distance_to(Vec3.from_array(p)) < 1e-6

    def test_zero_policy_stays_home(self):
        targets = evaluation_targets(ARM, 3, Seed(2))
        expected = np.linalg.norm(targets - np.array(START_POINT), axis=1).mean()
        got = rollout_distances(ARM, np.zeros((1, PARAMETERS)), targets, TINY)
        assert got[0] == pytest.approx(expected, abs=1e-6)

    def test_training_is_deterministic(self):
        a = train_reacher(ARM, 2, Seed(0), TINY)
        b = train_reacher(ARM, 2, Seed(0), TINY)
        assert a.curve.rows() == b.curve.rows()
        np.testing.assert_array_equal(a.policy.as_vector(), b.policy.as_vector())

    def test_best_so_far_never_increases(self):
        result = train_reacher(ARM, 3, Seed(3), TINY)
        best = result.curve.best_so_far
        assert result.curve.epochs == [1, 2, 3]
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
        assert best[0] <= result.initial_distance

    def test_epochs_must_be_positive(self):
        with pytest.raises(InvalidArgumentError):
            train_reacher(ARM, 0, Seed(0), TINY)

    @pytest.mark.slow
    def test_search_improves_on_the_idle_policy(self):
        result = train_reacher(ARM, 10, Seed(4), ReachConfig(eval_targets=4))
        assert result.curve.best_so_far[-1] < result.initial_distance

    @pytest.mark.slow
    def test_search_converges_at_defaults(self):
        config = ReachConfig()
        result = train_reacher(ARM, config.epochs, Seed(0), config)
        assert len(result.curve.epochs) == 25
        assert result.curve.best_so_far[-1] < 1.0
