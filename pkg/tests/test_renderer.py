import numpy as np
import pytest

from gsavatar import renderer, synthetic
from gsavatar.avatar import GaussianCloud, SkinnedTemplate, SmplxPose
from gsavatar.errors import DecodeError
from gsavatar.renderer import (
    Camera,
    attach_to_template,
    deform_gaussians_with_transforms,
    lbs_deform_gaussians,
    psnr,
    rasterize,
    ssim,
)
from gsavatar.rotations import axis_angle_to_matrix, quat_to_matrix


def ortho_camera(h=32, w=32, scale=16.0, background=(0.0, 0.0, 0.0)):
    return Camera(
        mode="orthographic",
        rotation=np.eye(3),
        translation=np.zeros(3),
        size=(h, w),
        scale=scale,
        principal=(w / 2.0, h / 2.0),
        background=np.asarray(background, dtype=np.float64),
    )


def random_cloud(rng, count, spread=0.6):
    quats = rng.normal(0, 1, (count, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return GaussianCloud(
        positions=rng.uniform(-spread, spread, (count, 3)),
        scales=rng.uniform(0.02, 0.08, (count, 3)),
        rotations=quats,
        opacities=rng.uniform(0.2, 0.95, count),
        colors=rng.uniform(0, 1, (count, 3)),
    )


def single_gaussian(position, opacity=0.7, color=(1.0, 0.0, 0.0), scale=0.1):
    return GaussianCloud(
        positions=[position],
        scales=[[scale] * 3],
        rotations=[[1.0, 0, 0, 0]],
        opacities=[opacity],
        colors=[color],
    )


class TestRasterize:
    def test_empty_cloud_is_background(self):
        cam = ortho_camera(background=(0.2, 0.4, 0.6))
        empty = GaussianCloud(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)),
                              np.zeros(0), np.zeros((0, 3)))
        img = rasterize(empty, cam)
        assert np.allclose(img.color, [0.2, 0.4, 0.6])
        assert np.all(img.alpha == 0)

    def test_single_centered_gaussian_compositing_value(self):
        # Gaussian dead-center on pixel (16, 16): alpha = opacity, so the pixel
        # is a * c + (1 - a) * bg
        cam = ortho_camera(background=(0.1, 0.1, 0.1))
        cloud = single_gaussian([0.03125, 0.03125, 0.5], opacity=0.7, color=(1.0, 0.0, 0.0))
        # uv = 0.03125 * 16 + 16 = 16.5? pixel centers are integer coordinates;
        # place exactly on pixel 16: world x s.t. x*scale + 16 = 16 -> x = 0
        cloud = single_gaussian([0.0, 0.0, 0.5], opacity=0.7, color=(1.0, 0.0, 0.0))
        img = rasterize(cloud, cam)
        expected = 0.7 * np.array([1.0, 0, 0]) + 0.3 * np.array([0.1, 0.1, 0.1])
        assert np.allclose(img.color[16, 16], expected, atol=1e-9)
        assert np.isclose(img.alpha[16, 16], 0.7, atol=1e-9)

    def test_two_coincident_gaussians_hand_composite(self):
        cam = ortho_camera(background=(0.0, 0.0, 0.0))
        near = single_gaussian([0.0, 0.0, 0.2], opacity=0.6, color=(1.0, 0.0, 0.0))
        far = single_gaussian([0.0, 0.0, 0.8], opacity=0.5, color=(0.0, 1.0, 0.0))

        def merge(a, b):
            return GaussianCloud(
                np.concatenate([a.positions, b.positions]),
                np.concatenate([a.scales, b.scales]),
                np.concatenate([a.rotations, b.rotations]),
                np.concatenate([a.opacities, b.opacities]),
                np.concatenate([a.colors, b.colors]),
            )

        expected = 0.6 * np.array([1.0, 0, 0]) + (1 - 0.6) * 0.5 * np.array([0.0, 1, 0])
        img_ab = rasterize(merge(near, far), cam)
        img_ba = rasterize(merge(far, near), cam)
        assert np.allclose(img_ab.color[16, 16], expected, atol=1e-9)
        assert np.allclose(img_ab.color, img_ba.color, atol=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        cam = ortho_camera(64, 64, scale=40.0)
        for _ in range(3):
            cloud = random_cloud(rng, 120)
            perm = rng.permutation(120)
            shuffled = GaussianCloud(
                cloud.positions[perm], cloud.scales[perm], cloud.rotations[perm],
                cloud.opacities[perm], cloud.colors[perm],
            )
            a = rasterize(cloud, cam)
            b = rasterize(shuffled, cam)
            assert np.abs(a.color - b.color).max() < 1e-6

    def test_alpha_conservation_and_range(self):
        rng = np.random.default_rng(1)
        cam = ortho_camera(48, 48, scale=30.0)
        cloud = random_cloud(rng, 200)
        img = rasterize(cloud, cam)
        assert img.alpha.max() <= 1.0 + 1e-6
        assert img.color.min() >= 0.0 and img.color.max() <= 1.0

    def test_orthographic_translation_equivariance(self):
        rng = np.random.default_rng(2)
        cam = ortho_camera(40, 40, scale=20.0)
        cloud = random_cloud(rng, 60)
        shift = np.array([0.25, -0.15, 0.0])
        moved = GaussianCloud(cloud.positions + shift, cloud.scales, cloud.rotations,
                              cloud.opacities, cloud.colors)
        cam_moved = Camera(
            mode="orthographic", rotation=cam.rotation,
            translation=cam.translation - cam.rotation @ shift,
            size=cam.size, scale=cam.scale, principal=cam.principal,
            background=cam.background,
        )
        a = rasterize(cloud, cam)
        b = rasterize(moved, cam_moved)
        assert np.abs(a.color - b.color).max() < 1e-9

    def test_singular_covariance_skipped_and_tallied(self):
        cam = ortho_camera()
        cloud = single_gaussian([0.0, 0.0, 0.5], scale=1e-12)
        img = rasterize(cloud, cam)
        assert img.skipped == 1
        assert np.allclose(img.color, cam.background)

    def test_pinhole_projection_renders(self):
        cam = Camera(
            mode="pinhole", rotation=np.eye(3), translation=np.array([0.0, 0.0, 2.0]),
            size=(32, 32), focal=(40.0, 40.0), principal=(16.0, 16.0),
        )
        cloud = single_gaussian([0.0, 0.0, 0.0], opacity=0.9)
        img = rasterize(cloud, cam)
        assert img.alpha[16, 16] > 0.5
        # behind-camera Gaussian is culled without error
        behind = single_gaussian([0.0, 0.0, -5.0])
        assert rasterize(behind, cam).alpha.max() == 0

    def test_alpha_clamp(self):
        cam = ortho_camera()
        cloud = single_gaussian([0.0, 0.0, 0.5], opacity=1.0)
        img = rasterize(cloud, cam)
        assert img.alpha[16, 16] <= 0.999 + 1e-12

    def test_nonfinite_attributes_rejected(self):
        cam = ortho_camera()
        cloud = single_gaussian([np.nan, 0.0, 0.5])
        with pytest.raises(ValueError):
            rasterize(cloud, cam)


class TestDeform:
    def identity_pose(self, template):
        return SmplxPose(np.zeros(3 * template.joint_count), np.zeros(0), np.zeros(0))

    def test_identity_pose_is_identity(self):
        rng = np.random.default_rng(3)
        template = synthetic.make_template(seed=3)
        cloud = random_cloud(rng, 40)
        attach = attach_to_template(cloud, template)
        out = lbs_deform_gaussians(cloud, template, self.identity_pose(template), attach)
        assert np.abs(out.positions - cloud.positions).max() < 1e-9
        dot = np.abs(np.sum(out.rotations * cloud.rotations, axis=1))
        assert np.all(dot > 1 - 1e-9)  # quaternions equal up to sign

    def test_single_joint_rigid_rotation(self):
        template = SkinnedTemplate(
            [[0.0, 0, 0]], [-1], [[0.0, 0, 0]], [[1.0]], [[-2, -2, -2], [2, 2, 2]]
        )
        cloud = single_gaussian([1.0, 0.0, 0.0])
        pose = SmplxPose([0.0, 0.0, np.pi / 2], np.zeros(0), np.zeros(0))
        out = lbs_deform_gaussians(cloud, template, pose, np.ones((1, 1)))
        assert np.allclose(out.positions[0], [0.0, 1.0, 0.0], atol=1e-6)
        expected_rot = axis_angle_to_matrix(np.array([0.0, 0.0, np.pi / 2]))
        got = quat_to_matrix(out.rotations[0])
        assert np.abs(got - expected_rot).max() < 1e-6

    def test_two_translation_blend_by_hand(self):
        # weights (0.5, 0.5) over pure translations (1,0,0) and (0,1,0):
        # position shifts by (0.5, 0.5, 0); rotation part is identity so the
        # quaternion is untouched
        q = np.array([0.5, 0.5, 0.5, 0.5])
        cloud = GaussianCloud([[0.2, 0.3, -0.1]], [[0.1, 0.2, 0.3]], [q], [0.5], [[1, 1, 1]])
        out = deform_gaussians_with_transforms(
            cloud, [[0.5, 0.5]], np.stack([np.eye(3), np.eye(3)]),
            np.array([[1.0, 0, 0], [0.0, 1, 0]]),
        )
        assert np.allclose(out.positions[0], [0.7, 0.8, -0.1], atol=1e-12)
        assert np.allclose(out.rotations[0], q, atol=1e-12)
        assert np.allclose(out.scales[0], [0.1, 0.2, 0.3])

    def test_rigid_motion_preserves_pairwise_distances(self):
        rng = np.random.default_rng(4)
        template = SkinnedTemplate(
            [[0.0, 0, 0]], [-1], [[0.3, -0.2, 0.5]], [[1.0]], [[-2, -2, -2], [2, 2, 2]]
        )
        cloud = random_cloud(rng, 30)
        pose = SmplxPose(rng.normal(0, 1, 3), np.zeros(0), np.zeros(0))
        out = lbs_deform_gaussians(cloud, template, pose, np.ones((30, 1)))
        before = np.linalg.norm(cloud.positions[:, None] - cloud.positions[None, :], axis=-1)
        after = np.linalg.norm(out.positions[:, None] - out.positions[None, :], axis=-1)
        assert np.abs(before - after).max() < 1e-6

    def test_attachment_rows_must_sum_to_one(self):
        cloud = single_gaussian([0.0, 0, 0])
        with pytest.raises(ValueError):
            deform_gaussians_with_transforms(
                cloud, [[0.4, 0.4]], np.stack([np.eye(3), np.eye(3)]), np.zeros((2, 3))
            )

    def test_attachment_shape_mismatch_rejected(self):
        template = synthetic.make_template(seed=5)
        cloud = single_gaussian([0.0, 0, 0])
        pose = self.identity_pose(template)
        with pytest.raises(ValueError):
            lbs_deform_gaussians(cloud, template, pose, np.ones((1, 2)))


class TestMetrics:
    def test_psnr_identical_is_capped(self):
        img = np.random.default_rng(5).random((8, 8, 3))
        assert psnr(img, img) == 99.0

    def test_psnr_uniform_one_over_255(self):
        a = np.zeros((16, 16, 3))
        b = np.full((16, 16, 3), 1.0 / 255.0)
        assert np.isclose(psnr(a, b), 20.0 * np.log10(255.0), atol=1e-9)

    def test_psnr_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)))

    def test_ssim_identical_is_one(self):
        img = np.random.default_rng(6).random((24, 24, 3))
        assert np.isclose(ssim(img, img), 1.0, atol=1e-12)

    def test_ssim_matches_reference_implementation(self):
        skimage_metrics = pytest.importorskip("skimage.metrics")
        rng = np.random.default_rng(7)
        ys, xs = np.mgrid[0:32, 0:32]
        checker = ((ys // 4 + xs // 4) % 2).astype(np.float64)
        cases = [
            (checker, 1.0 - checker),
            (rng.random((32, 32)), rng.random((32, 32))),
            (checker, np.clip(checker + 0.1 * rng.random((32, 32)), 0, 1)),
        ]
        for a, b in cases:
            ref = skimage_metrics.structural_similarity(
                a, b, win_size=11, gaussian_weights=True, sigma=1.5,
                use_sample_covariance=False, data_range=1.0,
            )
            assert np.isclose(ssim(a, b), ref, atol=1e-4)


class TestFiles:
    def test_ppm_writer(self, tmp_path):
        img = np.zeros((2, 3, 3))
        img[0, 0] = [1.0, 0.5, 0.0]
        path = tmp_path / "img.ppm"
        renderer.write_ppm(img, path)
        data = path.read_bytes()
        assert data.startswith(b"P6\n3 2\n255\n")
        assert data[11:14] == bytes([255, 128, 0])

    def test_camera_roundtrip(self, tmp_path):
        cam = synthetic.make_camera((48, 64))
        path = tmp_path / "cam.txt"
        renderer.save_camera(cam, path)
        loaded = renderer.load_camera(path)
        assert loaded.mode == cam.mode
        assert np.allclose(loaded.rotation, cam.rotation, atol=1e-9)
        assert loaded.size == cam.size
        assert np.isclose(loaded.scale, cam.scale)

    def test_camera_file_errors(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("mode orthographic\n")
        with pytest.raises(DecodeError):
            renderer.load_camera(path)
        path.write_text("mode: orthographic\n")
        with pytest.raises(DecodeError):
            renderer.load_camera(path)

    def test_bad_rotation_rejected(self):
        with pytest.raises(ValueError):
            Camera(mode="orthographic", rotation=np.eye(3) * 2, translation=np.zeros(3),
                   size=(8, 8))

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            Camera(mode="isometric", rotation=np.eye(3), translation=np.zeros(3), size=(8, 8))
