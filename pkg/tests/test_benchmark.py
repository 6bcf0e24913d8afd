from dataclasses import replace

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from replab.benchmark import (
    AttemptRecord,
    CsrCurve,
    EpisodeLog,
    ablation,
    aggregate_runs,
    build_aligned_cell,
    collect_random_grasps,
    collect_sharded,
    csr,
    episode_issues,
    merge_records,
    perturb_camera,
    record_features,
    reproducibility_experiment,
    run_episode,
    run_episodes,
)
from replab.calibration import CalibrationModel
from replab.camera import CameraIntrinsics, default_camera_pose
from replab.constants import FailureReason, ObjectProfile, PlannerSettings, ScorerKind, Workspace
from replab.exceptions import DegenerateInputError, InvalidArgumentError
from replab.geometry import GraspPose, RigidTransform, Seed
from replab.planners import (
    NullPlanner,
    OraclePlanner,
    PrincipalAxisPlanner,
    RandomThetaPlanner,
    RandomXYZThetaPlanner,
    candidate_features,
)
from replab.records import CameraView, ClusterSummary, GraspRecord
from replab.scene import Scene, evaluation_object_set, execute_grasp, scatter_with_retry
from replab.services.config_service import CellConfig
from replab.workcell import Workcell

SMALL = replace(
    CellConfig(),
    intrinsics=CameraIntrinsics().scaled(0.5),
    episode_objects=4,
    max_attempts=8,
    sweep_after=3,
    runs=1,
)
POSE = GraspPose(0.0, 0.0, 1.0, 0.0)


@pytest.fixture(scope="module")
def small_cell():
    return Workcell(SMALL, Seed(0))


def _log(scene, outcomes):
    """EpisodeLog from (success, remaining, sweep) triples."""
    attempts = [
        AttemptRecord(i, POSE, ok, None if ok else FailureReason.EMPTY_JAWS, 0 if ok else None, left, swept)
        for i, (ok, left, swept) in enumerate(outcomes)
    ]
    return EpisodeLog("test", ObjectProfile.SEEN, 0, scene, attempts)


VIEW = CameraView(
    CameraIntrinsics().scaled(0.25), CalibrationModel.from_transform(default_camera_pose()), default_camera_pose()
)


def _record(ordinal, gen, cell_id=1):
    k = VIEW.intrinsics
    depth = VIEW.floor_depth() - gen.uniform(0.0, 3.0, size=(k.height, k.width))
    return GraspRecord(
        cell_id=cell_id,
        ordinal=ordinal,
        seed=0,
        pose=GraspPose(gen.uniform(-5.0, 5.0), gen.uniform(-5.0, 5.0), 1.0, gen.uniform(0.0, np.pi)),
        success=bool(gen.random() < 0.5),
        achieved=(0.0, 0.0, 1.0),
        cluster=ClusterSummary((0.0, 0.0, 1.0), (1.0, 0.5), 0.0, 40),
        depth=depth,
        view=VIEW,
    )


class TestCsr:
    def test_cumulative_successes(self):
        log = _log(Scene(()), [(True, 0, None), (False, 0, None), (True, 0, None), (False, 0, None)])
        assert csr(log).counts == (1, 1, 2, 2)
        assert csr(log).final == 2

    def test_curve_grows_by_at_most_one(self):
        with pytest.raises(InvalidArgumentError):
            CsrCurve((0, 2))

    def test_aggregate_pads_with_final_value(self):
        mean, runs = aggregate_runs([CsrCurve((0,)), CsrCurve((1, 2))], length=3)
        np.testing.assert_array_equal(mean, [0.5, 1.0, 1.0])
        np.testing.assert_array_equal(runs[0], [0.0, 0.0, 0.0])

    def test_aggregate_of_nothing(self):
        with pytest.raises(DegenerateInputError):
            aggregate_runs([])


class TestEpisodeIssues:
    def test_well_formed_clearing(self, sphere, scene_of):
        scene = scene_of((sphere(1.0), -5.0, 0.0, 0.0), (sphere(1.0), 5.0, 0.0, 0.0))
        log = _log(scene, [(True, 1, None), (False, 1, None), (True, 0, None)])
        assert episode_issues(log, SMALL) == []
        assert log.cleared

    def test_success_must_remove_one_object(self, sphere, scene_of):
        scene = scene_of((sphere(1.0), -5.0, 0.0, 0.0), (sphere(1.0), 5.0, 0.0, 0.0))
        log = _log(scene, [(True, 2, None)] + [(False, 2, None)] * 7)
        assert any("exactly one" in issue for issue in episode_issues(log, SMALL))

    def test_early_failure_sweep(self, sphere, scene_of):
        scene = scene_of((sphere(1.0), 0.0, 0.0, 0.0))
        log = _log(scene, [(False, 1, "failures")] + [(False, 1, None)] * 7)
        assert any("failure sweep" in issue for issue in episode_issues(log, SMALL))

    def test_episode_ending_early(self, sphere, scene_of):
        log = _log(scene_of((sphere(1.0), 0.0, 0.0, 0.0)), [(False, 1, None)])
        assert episode_issues(log, SMALL) == ["episode ended early with objects left"]


class TestEpisodes:
    def test_null_planner_never_succeeds(self, small_cell):
        log = run_episode(SMALL, NullPlanner(), ObjectProfile.SEEN, 1, small_cell)
        assert len(log.attempts) == SMALL.max_attempts
        assert csr(log).final == 0
        assert episode_issues(log, SMALL) == []
        assert any(a.sweep == "failures" for a in log.attempts)
        assert all(a.remaining == SMALL.episode_objects for a in log.attempts)

    def test_same_seed_same_episode(self, small_cell):
        a = run_episode(SMALL, RandomXYZThetaPlanner(), ObjectProfile.SEEN, 5, small_cell)
        b = run_episode(SMALL, RandomXYZThetaPlanner(), ObjectProfile.SEEN, 5, small_cell)
        assert a.attempts == b.attempts
        assert a.initial_scene == b.initial_scene

    def test_unseen_objects_are_used(self, small_cell):
        log = run_episode(SMALL, NullPlanner(), ObjectProfile.UNSEEN, 2, small_cell)
        assert log.initial_objects == SMALL.episode_objects
        assert all(len(o.shape.primitives) >= 2 for o in log.initial_scene.objects)

    @pytest.mark.slow
    def test_oracle_clears_objects(self, small_cell):
        cell = replace(SMALL, max_attempts=12)
        log = run_episode(cell, OraclePlanner(cell.gripper, cell.d_slip), ObjectProfile.SEEN, 3, small_cell)
        assert csr(log).final >= 1
        assert episode_issues(log, cell) == []


class TestCollection:
    def test_collection_is_deterministic(self, small_cell):
        seen = []
        a = collect_random_grasps(SMALL, 6, 3, small_cell, on_attempt=lambda r, s: seen.append((r.ordinal, len(s))))
        b = collect_random_grasps(SMALL, 6, 3, small_cell)
        assert len(a) == 6
        assert all(x.same_as(y) for x, y in zip(a, b))
        assert [r.ordinal for r in a] == list(range(6))
        assert [o for o, _ in seen] == list(range(6))
        assert all(n >= SMALL.min_objects for _, n in seen)

    def test_records_hold_the_depth_image_and_view(self, small_cell):
        for r in collect_random_grasps(SMALL, 4, 9, small_cell):
            assert r.cell_id == SMALL.cell_id
            assert Workspace.X_MIN <= r.pose.x <= Workspace.X_MAX
            assert r.depth.shape == (SMALL.intrinsics.height, SMALL.intrinsics.width)
            assert r.depth.dtype == np.uint16
            assert r.view is small_cell.view
            assert r.cluster.points > 0

    def test_training_features_match_planning_features(self, small_cell):
        objects = evaluation_object_set(ObjectProfile.SEEN, SMALL.object_set_seed, 4)
        scene = scatter_with_retry(objects, np.random.default_rng(8))
        obs = small_cell.observe(scene, Seed(8))
        poses = np.array([[0.0, 0.0, 1.0, 0.4], [3.0, -2.0, 1.5, 2.0]])
        summary = ClusterSummary((0.0, 0.0, 1.0), (1.0, 0.5), 0.0, 40)
        records = [
            GraspRecord(1, i, 8, GraspPose(*p), i == 0, (0.0, 0.0, 1.0), summary, obs.depth.depth, small_cell.view)
            for i, p in enumerate(poses)
        ]
        np.testing.assert_allclose(records[0].depth_image().depth, obs.depth.depth, atol=0.005 + 1e-9)
        for kind in ScorerKind:
            stored, _, _ = record_features(records, kind)
            live, _ = candidate_features(obs.depth, poses, kind, small_cell.context)
            assert stored.shape == live.shape
            assert np.mean(np.abs(stored - live)) < 0.01

    def test_features_for_another_crop_size(self):
        gen = np.random.default_rng(4)
        records = [_record(i, gen) for i in range(3)]
        small, _, _ = record_features(records, ScorerKind.CROPPED, crop_size=8)
        assert small.shape == (3, 64)

    def test_needs_at_least_one_grasp(self, small_cell):
        with pytest.raises(InvalidArgumentError):
            collect_random_grasps(SMALL, 0, 0, small_cell)

    def test_merge_orders_and_rejects_duplicates(self):
        gen = np.random.default_rng(0)
        records = [_record(i, gen) for i in range(5)]
        merged = merge_records([records[3:], records[:3]])
        assert [r.ordinal for r in merged] == [0, 1, 2, 3, 4]
        with pytest.raises(InvalidArgumentError):
            merge_records([records, records[:1]])

    def test_sharded_cells_need_distinct_ids(self):
        with pytest.raises(InvalidArgumentError):
            collect_sharded([SMALL, SMALL], 1, 0)

    @pytest.mark.slow
    def test_sharded_collection(self):
        cells = [SMALL, replace(SMALL, cell_id=2)]
        records = collect_sharded(cells, 2, 0, workers=2)
        assert [(r.cell_id, r.ordinal) for r in records] == [(1, 0), (1, 1), (2, 0), (2, 1)]


class TestScorerTraining:
    def test_record_features_layout(self):
        gen = np.random.default_rng(1)
        records = [_record(i, gen) for i in range(3)]
        features, bins, labels = record_features(records, ScorerKind.CROPPED)
        assert features.shape == (3, PlannerSettings.CROP_SIZE**2)
        assert bins.shape == (3,)
        assert labels.dtype == bool
        full, _, _ = record_features(records, ScorerKind.FULL)
        rows, cols = PlannerSettings.FULL_IMAGE_SHAPE
        assert full.shape[1] > rows * cols

    def test_no_records(self):
        with pytest.raises(DegenerateInputError):
            record_features([], ScorerKind.FULL)

    def test_ablation_is_deterministic(self):
        gen = np.random.default_rng(2)
        records = [_record(i, gen) for i in range(300)]
        a = ablation(records, [100, 200], ScorerKind.FULL, 4)
        b = ablation(records, [100, 200], ScorerKind.FULL, 4)
        assert a == b
        assert [row.size for row in a] == [100, 200]
        assert all(0.0 <= row.accuracy <= 1.0 for row in a)

    def test_ablation_size_bound(self):
        gen = np.random.default_rng(3)
        records = [_record(i, gen) for i in range(150)]
        with pytest.raises(InvalidArgumentError):
            ablation(records, [100, 151], ScorerKind.FULL, 0)


class TestCrossCell:
    def test_perturbation_magnitudes(self):
        moved = perturb_camera(RigidTransform.identity(), 1.0, 2.0, Seed(5))
        assert np.linalg.norm(moved.translation) == pytest.approx(1.0)
        angle = Rotation.from_matrix(moved.rotation).magnitude()
        assert np.degrees(angle) == pytest.approx(2.0)

    def test_identical_cells_reproduce(self):
        cell_b = replace(SMALL, cell_id=2)
        report = reproducibility_experiment(SMALL, cell_b, PrincipalAxisPlanner(), 1, 0)
        assert report.difference == 0.0
        assert not report.misaligned
        np.testing.assert_array_equal(report.mean_a, report.mean_b)

    def test_needs_a_run(self):
        with pytest.raises(InvalidArgumentError):
            reproducibility_experiment(SMALL, SMALL, NullPlanner(), 0, 0)

    @pytest.mark.slow
    def test_aligned_second_cell(self):
        aligned = build_aligned_cell(SMALL, 3, translation=1.0, rotation_deg=1.0)
        assert aligned.cell.cell_id == SMALL.cell_id + 1
        assert aligned.alignment is not None
        assert aligned.alignment.discrepancy < 0.3
        assert aligned.cell.calibration is not None


class TestAcceptance:
    def test_labels_replay_on_the_logged_scene(self, small_cell):
        logged = []
        records = collect_random_grasps(SMALL, 20, 6, small_cell, on_attempt=lambda r, s: logged.append((r, s)))
        assert len(logged) == len(records) == 20
        for record, scene in logged:
            if np.isnan(record.achieved[0]):
                assert not record.success
                continue
            landed = GraspPose(*record.achieved, record.pose.theta)
            outcome, _ = execute_grasp(scene, landed, SMALL.gripper, SMALL.d_slip)
            assert outcome.success == record.success

    def test_unaligned_offset_is_flagged(self):
        short = replace(SMALL, max_attempts=1)
        moved = build_aligned_cell(short, 4, translation=3.0, rotation_deg=0.0, align=False)
        assert moved.alignment is None
        report = reproducibility_experiment(short, moved.cell, NullPlanner(), 1, 0)
        assert report.calibration_error_b > 2.0
        assert report.misaligned

    @pytest.mark.slow
    def test_protocol_holds_over_many_episodes(self, small_cell):
        logs = run_episodes(SMALL, RandomXYZThetaPlanner(), ObjectProfile.SEEN, list(range(100)), 4, small_cell)
        for log in logs:
            assert episode_issues(log, SMALL) == []
            counts = csr(log).counts
            assert all(b - a in (0, 1) for a, b in zip((0,) + counts, counts))
            assert len(log.attempts) <= SMALL.max_attempts

    @pytest.mark.slow
    def test_collection_success_band(self):
        records = collect_random_grasps(CellConfig(), 1000, 0)
        rate = np.mean([r.success for r in records])
        assert 0.15 <= rate <= 0.35

    @pytest.mark.slow
    def test_baseline_ordering(self):
        cell = CellConfig()
        wc = Workcell(cell, Seed(0))
        seeds = list(range(20))

        def mean_final(planner, profile=ObjectProfile.SEEN):
            logs = run_episodes(cell, planner, profile, seeds, workers=4, workcell=wc)
            return np.mean([csr(log).final for log in logs])

        principal = mean_final(PrincipalAxisPlanner())
        assert principal > mean_final(RandomThetaPlanner()) > mean_final(NullPlanner())
        assert mean_final(PrincipalAxisPlanner(), ObjectProfile.UNSEEN) < principal

    @pytest.mark.slow
    def test_oracle_clears_the_bin(self):
        cell = CellConfig()
        logs = run_episodes(cell, OraclePlanner(), ObjectProfile.SEEN, list(range(20)), workers=4)
        assert all(len(log.attempts) <= cell.max_attempts for log in logs)
        assert sum(log.cleared for log in logs) >= 19

    @pytest.mark.slow
    def test_oracle_scorer_beats_random_grasps_on_paired_episodes(self):
        cell = CellConfig()
        wc = Workcell(cell, Seed(0))
        seeds = list(range(10))
        oracle = run_episodes(cell, OraclePlanner(), ObjectProfile.SEEN, seeds, workers=4, workcell=wc)
        baseline = run_episodes(cell, RandomXYZThetaPlanner(), ObjectProfile.SEEN, seeds, workers=4, workcell=wc)
        assert [log.seed for log in oracle] == [log.seed for log in baseline]
        gains = [csr(a).final - csr(b).final for a, b in zip(oracle, baseline)]
        assert np.mean(gains) > 0.0
        assert sum(g >= 0 for g in gains) >= 8

    @pytest.mark.slow
    def test_aligned_cell_reproduces(self):
        cell_a = Workcell(CellConfig(), Seed(0).child("calibrate")).cell
        aligned = build_aligned_cell(cell_a, 3, translation=1.0, rotation_deg=2.0)
        assert aligned.alignment is not None
        report = reproducibility_experiment(cell_a, aligned.cell, PrincipalAxisPlanner(), 3, 0, workers=3)
        assert abs(report.difference) <= 2.0
        assert report.calibration_error_b < 2.0
        assert not report.misaligned
