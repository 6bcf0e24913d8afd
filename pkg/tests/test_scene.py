import math

import numpy as np
import pytest

from replab.arm import GripperSpec
from replab.constants import FailureReason, GripperDefaults, ObjectProfile, PrimitiveKind, ShapeKind
from replab.exceptions import InvalidArgumentError, ScatterError
from replab.geometry import GraspPose, Seed
from replab.scene import (
    ObjectInstance,
    ObjectShape,
    Primitive,
    Scene,
    evaluation_object_set,
    execute_grasp,
    generate_object_set,
    generate_training_set,
    grasp_success_batch,
    reference_scene,
    scatter,
    scatter_with_retry,
    sweep,
)

GRIPPER = GripperSpec()


def _grasp(scene, x, y, z, theta):
    return execute_grasp(scene, GraspPose(x, y, z, theta), GRIPPER)


class TestGraspOutcome:
    def test_empty_jaws(self, sphere, scene_of):
        outcome, after = _grasp(scene_of((sphere(1.0), 0.0, 0.0, 0.0)), 10.0, 10.0, 0.5, 0.0)
        assert not outcome.success
        assert outcome.reason == FailureReason.EMPTY_JAWS
        assert len(after) == 1

    def test_centred_sphere_is_lifted(self, sphere, scene_of):
        scene = scene_of((sphere(1.0), 0.0, 0.0, 0.0))
        for theta in np.linspace(0.0, math.pi, 7, endpoint=False):
            outcome, after = _grasp(scene, 0.0, 0.0, 0.5, theta)
            assert outcome.success
            assert outcome.object_id == 0
            assert len(after) == 0

    def test_box_along_its_length_is_too_wide(self, box, scene_of):
        outcome, _ = _grasp(scene_of((box(2.0, 1.0, 1.0), 0.0, 0.0, 0.0)), 0.0, 0.0, 0.5, 0.0)
        assert outcome.reason == FailureReason.WIDTH_TOO_WIDE

    def test_box_across_its_width_succeeds(self, box, scene_of):
        outcome, _ = _grasp(scene_of((box(2.0, 1.0, 1.0), 0.0, 0.0, 0.0)), 0.0, 0.0, 0.5, math.pi / 2)
        assert outcome.success

    def test_thin_box_is_too_narrow(self, box, scene_of):
        outcome, _ = _grasp(scene_of((box(2.0, 0.4, 1.0), 0.0, 0.0, 0.0)), 0.0, 0.0, 0.5, math.pi / 2)
        assert outcome.reason == FailureReason.WIDTH_TOO_NARROW

    def test_off_centre_grasp_slips(self, sphere, scene_of):
        outcome, _ = _grasp(scene_of((sphere(1.0), 0.0, 0.0, 0.0)), 0.9, 0.0, 0.5, 0.0)
        assert outcome.reason == FailureReason.SLIP

    def test_width_is_the_cross_section_at_grasp_height(self, sphere, scene_of):
        scene = scene_of((sphere(1.7), 0.0, 0.0, 0.0))
        low = grasp_success_batch(scene, [0.0], [0.0], [0.4], [0.0], GRIPPER)
        assert low.success[0]
        assert low.width[0] == pytest.approx(2.0 * math.sqrt(1.7**2 - 1.3**2))
        equator, _ = _grasp(scene, 0.0, 0.0, 1.7, 0.0)
        assert equator.reason == FailureReason.WIDTH_TOO_WIDE

    def test_grasp_above_the_object_finds_empty_jaws(self, box, scene_of):
        outcome, _ = _grasp(scene_of((box(1.0, 1.0, 1.0), 0.0, 0.0, 0.0)), 0.0, 0.0, 2.5, 0.0)
        assert outcome.reason == FailureReason.EMPTY_JAWS

    def test_soft_objects_tolerate_extra_width(self, scene_of):
        def shape(soft):
            prim = Primitive(PrimitiveKind.BOX, (1.7, 1.0, 1.0))
            return ObjectShape(ShapeKind.BOX, (prim,), soft=soft)

        rigid, _ = _grasp(scene_of((shape(False), 0.0, 0.0, 0.0)), 0.0, 0.0, 0.5, 0.0)
        soft, _ = _grasp(scene_of((shape(True), 0.0, 0.0, 0.0)), 0.0, 0.0, 0.5, 0.0)
        assert rigid.reason == FailureReason.WIDTH_TOO_WIDE
        assert soft.success

    def test_two_objects_between_jaws_collide(self, sphere, scene_of):
        scene = scene_of((sphere(1.0), -1.2, 0.0, 0.0), (sphere(1.0), 1.2, 0.0, 0.0))
        outcome, after = _grasp(scene, 0.0, 0.0, 0.5, 0.0)
        assert outcome.reason == FailureReason.COLLISION
        assert len(after) == 2

    def test_below_floor_clearance_collides(self, sphere, scene_of):
        outcome, _ = _grasp(scene_of((sphere(1.0), 0.0, 0.0, 0.0)), 0.0, 0.0, 0.1, 0.0)
        assert outcome.reason == FailureReason.COLLISION

    def test_outside_workspace_collides(self, sphere, scene_of):
        outcome, _ = _grasp(scene_of((sphere(1.0), 0.0, 0.0, 0.0)), 30.0, 0.0, 0.5, 0.0)
        assert outcome.reason == FailureReason.COLLISION

    def test_outcome_is_symmetric_under_half_turn(self, box, sphere, scene_of):
        scene = scene_of((box(2.0, 1.0, 1.0), -3.0, 0.0, 0.5), (sphere(1.2), 3.0, 2.0, 0.0))
        gen = np.random.default_rng(1)
        n = 2000
        x, y = gen.uniform(-6.0, 6.0, n), gen.uniform(-3.0, 5.0, n)
        z, theta = gen.uniform(0.3, 2.5, n), gen.uniform(0.0, math.pi, n)
        a = grasp_success_batch(scene, x, y, z, theta, GRIPPER)
        b = grasp_success_batch(scene, x, y, z, theta + math.pi, GRIPPER)
        np.testing.assert_array_equal(a.success, b.success)
        np.testing.assert_array_equal(a.reason, b.reason)
        assert a.success.any()

    def test_box_width_matches_closed_form(self, box, scene_of):
        gen = np.random.default_rng(7)
        checked = 0
        for _ in range(100):
            a, b = gen.uniform(0.4, 1.5), gen.uniform(0.4, 1.5)
            try:
                shape = box(a, b, 1.0)
            except InvalidArgumentError:
                continue
            yaw = gen.uniform(-math.pi, math.pi)
            theta = gen.uniform(0.0, math.pi)
            phi = theta - yaw
            expected = min(2 * a / abs(math.cos(phi)), 2 * b / abs(math.sin(phi)))
            if min(abs(expected - 1.0), abs(expected - 3.0)) < 0.01:
                continue
            result = grasp_success_batch(scene_of((shape, 0.0, 0.0, yaw)), [0.0], [0.0], [0.5], [theta], GRIPPER)
            assert result.success[0] == (1.0 <= expected <= 3.0)
            if expected <= 3.0:
                assert result.width[0] == pytest.approx(expected)
                assert result.offset[0] == pytest.approx(0.0, abs=1e-9)
            checked += 1
        assert checked > 80

    def test_decision_matches_dense_sampling(self):
        shapes = generate_object_set(ObjectProfile.SEEN, 100, Seed(21))
        gen = np.random.default_rng(22)
        t = np.arange(-8.0, 8.0, 0.002)
        reach = 0.5 * GRIPPER.max_width
        compared = 0
        for shape in shapes:
            instance = ObjectInstance(0, shape, 0.0, 0.0, gen.uniform(-math.pi, math.pi))
            x, y = gen.uniform(-1.0, 1.0, 2)
            z = gen.uniform(0.31, shape.height + 0.2)
            theta = gen.uniform(0.0, math.pi)
            line = np.column_stack([x + t * math.cos(theta), y + t * math.sin(theta), np.full(len(t), z)])
            inside = t[instance.contains(line)]
            expected, margins = False, [1.0]
            if len(inside) and inside.min() <= reach and inside.max() >= -reach:
                lo, hi = inside.min(), inside.max()
                width, mid = hi - lo, 0.5 * (lo + hi)
                widest = GRIPPER.max_width + (GRIPPER.soft_tolerance if shape.soft else 0.0)
                expected = GRIPPER.min_width <= width <= widest and abs(mid) <= GripperDefaults.SLIP_DISTANCE
                margins = [width - GRIPPER.min_width, width - widest, abs(mid) - GripperDefaults.SLIP_DISTANCE]
                margins += [lo - reach, hi + reach]
            elif len(inside):
                margins = [inside.min() - reach, inside.max() + reach]
            if min(abs(m) for m in margins) < 0.01:
                continue
            outcome, _ = execute_grasp(Scene((instance,)), GraspPose(x, y, z, theta), GRIPPER)
            assert outcome.success == expected
            compared += 1
        assert compared >= 90


class TestScene:
    def test_duplicate_ids_rejected(self, sphere):
        s = sphere(1.0)
        with pytest.raises(InvalidArgumentError):
            Scene((ObjectInstance(0, s, 0.0, 0.0, 0.0), ObjectInstance(0, s, 5.0, 0.0, 0.0)))

    def test_raycast_from_above(self, sphere, scene_of):
        scene = scene_of((sphere(2.0), 0.0, 0.0, 0.0))
        t, label = scene.raycast(np.array([0.0, 0.0, 50.0]), np.array([[0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]))
        assert t[0] == pytest.approx(46.0)
        assert label.tolist() == [0, -1]
        assert math.isinf(t[1])

    def test_dict_round_trip(self, box, sphere, scene_of):
        scene = scene_of((box(2.0, 1.0, 1.0), -3.0, 0.0, 0.5), (sphere(1.2), 3.0, 2.0, 0.0))
        assert Scene.from_dict(scene.to_dict()) == scene

    def test_reference_scene_is_separated(self):
        scene = reference_scene()
        assert len(scene) == 5
        assert scene.max_interpenetration() <= 0.0


class TestObjectSets:
    def test_sets_are_seed_determined(self):
        a = generate_object_set(ObjectProfile.SEEN, 5, Seed(3))
        b = generate_object_set(ObjectProfile.SEEN, 5, Seed(3))
        c = generate_object_set(ObjectProfile.SEEN, 5, Seed(4))
        assert [s.to_dict() for s in a] == [s.to_dict() for s in b]
        assert [s.to_dict() for s in a] != [s.to_dict() for s in c]

    def test_seen_shapes_are_single_primitives(self):
        for shape in generate_object_set(ObjectProfile.SEEN, 10, Seed(0)):
            assert len(shape.primitives) == 1
            assert shape.kind != ShapeKind.COMPOSITE
            assert shape.max_extent <= 10.0
            assert shape.find_feasible_grasp() is not None

    def test_unseen_shapes_are_composites(self):
        for shape in generate_object_set(ObjectProfile.UNSEEN, 10, Seed(0)):
            assert 2 <= len(shape.primitives) <= 4
            assert shape.kind == ShapeKind.COMPOSITE

    def test_seen_evaluation_set_comes_from_the_training_pool(self):
        pool = generate_training_set(Seed(7))
        test = evaluation_object_set(ObjectProfile.SEEN, Seed(7), count=20)
        assert len(pool) == 100
        assert [s.to_dict() for s in test] == [s.to_dict() for s in pool[:20]]

    def test_count_must_be_positive(self):
        with pytest.raises(InvalidArgumentError):
            generate_object_set(ObjectProfile.SEEN, 0, Seed(0))


class TestScatter:
    def test_scatter_separates_objects(self):
        objects = generate_object_set(ObjectProfile.SEEN, 20, Seed(1))
        scene = scatter_with_retry(objects, Seed(2))
        assert len(scene) == 20
        assert scene.object_ids == list(range(20))
        assert scene.max_interpenetration() <= 0.2
        for obj in scene.objects:
            disks = obj.world_disks()
            assert np.all(disks[:, 0] - disks[:, 2] >= scene.bounds[0] - 1e-9)
            assert np.all(disks[:, 0] + disks[:, 2] <= scene.bounds[1] + 1e-9)

    def test_scatter_is_deterministic(self):
        objects = generate_object_set(ObjectProfile.SEEN, 8, Seed(1))
        assert scatter_with_retry(objects, Seed(5)).to_dict() == scatter_with_retry(objects, Seed(5)).to_dict()

    def test_sweep_keeps_objects(self):
        objects = generate_object_set(ObjectProfile.SEEN, 10, Seed(1))
        scene = scatter_with_retry(objects, Seed(2)).remove(3)
        swept = sweep(scene, Seed(8))
        assert swept.object_ids == scene.object_ids
        assert swept.max_interpenetration() <= 0.2

    def test_tighter_overlap_limit_is_honoured(self):
        objects = generate_object_set(ObjectProfile.SEEN, 12, Seed(1))
        scene = scatter_with_retry(objects, Seed(2), max_interpenetration=0.05)
        assert scene.max_interpenetration() <= 0.05

    def test_overlap_left_after_settling_is_rejected(self, monkeypatch):
        objects = generate_object_set(ObjectProfile.SEEN, 6, Seed(1))
        scene = scatter_with_retry(objects, Seed(2))
        monkeypatch.setattr("replab.scene._settle", lambda shapes, xy, *args: (np.zeros_like(xy), 0))
        with pytest.raises(ScatterError, match="interpenetrate"):
            scatter(objects, Seed(3))
        assert sweep(scene, Seed(4)) is scene

    def test_sweep_of_empty_scene(self):
        empty = Scene(())
        assert sweep(empty, Seed(0)) is empty
