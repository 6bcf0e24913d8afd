import numpy as np
import pytest

from replab.camera import (
    FLOOR_LABEL,
    NOISE_TRUNCATION,
    CameraIntrinsics,
    default_camera_pose,
    deproject,
    floor_depth,
    project,
    render,
)
from replab.exceptions import ConfigurationError, InvalidArgumentError
from replab.geometry import RigidTransform, Seed
from replab.scene import Scene

SMALL = CameraIntrinsics().scaled(0.25)


class TestPinhole:
    def test_deproject_known_pixel(self):
        k = CameraIntrinsics(fx=100.0, fy=100.0, cx=160.0, cy=120.0, width=320, height=240)
        p = deproject(260, 120, 2.0, k)
        assert (p.x, p.y, p.z) == pytest.approx((2.0, 0.0, 2.0))
        assert p.frame == "camera"

    def test_project_inverts_deproject(self):
        k = CameraIntrinsics()
        gen = np.random.default_rng(5)
        for _ in range(200):
            u, v = gen.uniform(0, k.width - 1), gen.uniform(0, k.height - 1)
            d = gen.uniform(10.0, 150.0)
            px = project(deproject(u, v, d, k).as_array(), k)[0]
            np.testing.assert_allclose(px, [u, v], atol=1e-6)

    @pytest.mark.parametrize("depth", [0.0, -1.0])
    def test_deproject_rejects_no_return(self, depth):
        with pytest.raises(InvalidArgumentError):
            deproject(10, 10, depth, CameraIntrinsics())

    def test_deproject_rejects_pixel_outside(self):
        with pytest.raises(InvalidArgumentError):
            deproject(400, 10, 5.0, CameraIntrinsics())

    def test_project_rejects_points_behind(self):
        with pytest.raises(InvalidArgumentError):
            project(np.array([[0.0, 0.0, -1.0]]), CameraIntrinsics())

    def test_principal_point_must_lie_in_image(self):
        with pytest.raises(InvalidArgumentError):
            CameraIntrinsics(cx=400.0)

    def test_scaled_keeps_field_of_view(self):
        k = CameraIntrinsics()
        half = k.scaled(0.5)
        assert (half.width, half.height) == (160, 120)
        assert half.fx == pytest.approx(137.5)
        assert half.cx == pytest.approx(79.5)


class TestRender:
    def test_empty_scene_matches_floor(self):
        pose = default_camera_pose()
        image, cloud = render(Scene(()), pose, SMALL, Seed(0), noise_sigma=0.0)
        np.testing.assert_array_equal(image.depth, floor_depth(pose, SMALL))
        assert set(np.unique(image.labels[image.depth > 0])) == {FLOOR_LABEL}
        assert len(cloud) == int(np.count_nonzero(image.depth))

    def test_object_is_closer_than_floor(self, sphere, scene_of):
        pose = default_camera_pose()
        scene = scene_of((sphere(2.0), 0.0, 0.0, 0.0))
        image, _ = render(scene, pose, SMALL, Seed(0), noise_sigma=0.0)
        floor = floor_depth(pose, SMALL)
        hit = image.labels == 0
        assert hit.any()
        assert np.all(image.depth[hit] < floor[hit])

    def test_render_is_deterministic(self, box, scene_of):
        scene = scene_of((box(2.0, 1.0, 1.0), 3.0, -2.0, 0.4))
        first, cloud_a = render(scene, default_camera_pose(), SMALL, Seed(9))
        second, cloud_b = render(scene, default_camera_pose(), SMALL, Seed(9))
        np.testing.assert_array_equal(first.depth, second.depth)
        np.testing.assert_array_equal(cloud_a.points, cloud_b.points)

    def test_noise_is_truncated(self, box, scene_of):
        scene = scene_of((box(2.0, 1.0, 1.0), 3.0, -2.0, 0.4))
        clean, _ = render(scene, default_camera_pose(), SMALL, Seed(3), noise_sigma=0.0)
        noisy, _ = render(scene, default_camera_pose(), SMALL, Seed(3), noise_sigma=0.15)
        both = (clean.depth > 0) & (noisy.depth > 0)
        assert np.max(np.abs(clean.depth[both] - noisy.depth[both])) <= NOISE_TRUNCATION * 0.15 + 1e-9
        np.testing.assert_array_equal(clean.labels[both], noisy.labels[both])

    def test_camera_facing_away_from_floor(self):
        pose = RigidTransform.look_at((0.0, -28.0, 10.0), (0.0, 2.0, 50.0))
        with pytest.raises(ConfigurationError):
            render(Scene(()), pose, SMALL, Seed(0))

    def test_labels_agree_with_membership(self, box, sphere, scene_of):
        pose = default_camera_pose()
        scene = scene_of((box(2.0, 1.0, 1.0), -5.0, 0.0, 0.3), (sphere(1.5), 5.0, 3.0, 0.0))
        _, cloud = render(scene, pose, CameraIntrinsics().scaled(0.5), Seed(0), noise_sigma=0.0)
        world = cloud.transformed(pose).points
        rays = world - pose.translation
        rays /= np.linalg.norm(rays, axis=1)[:, None]
        on_object = cloud.labels >= 0
        assert set(np.unique(cloud.labels[on_object])) == {0, 1}
        inside = scene.contains(world[on_object] + 1e-6 * rays[on_object])
        np.testing.assert_array_equal(inside, cloud.labels[on_object])
        in_front = scene.contains(world[~on_object] - 1e-6 * rays[~on_object])
        assert np.all(in_front == -1)

    def test_floor_points_are_on_the_floor(self):
        pose = default_camera_pose()
        _, cloud = render(Scene(()), pose, SMALL, Seed(0), noise_sigma=0.0)
        np.testing.assert_allclose(cloud.transformed(pose).points[:, 2], 0.0, atol=1e-9)
