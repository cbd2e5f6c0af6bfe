import numpy as np
import pytest

from gsavatar import loss, synthetic
from gsavatar.avatar import GaussianMapPair
from gsavatar.loss import (
    FacialWeightConfig,
    FeatureExtractor,
    LossWeights,
    facial_weight_map,
    fit_generator,
    offset_loss,
    total_loss,
    weighted_perceptual,
)

PAPER_ALPHA = 0.2
PAPER_WEIGHTS = LossWeights(1.0, 1.0, 0.1, 0.005)


class TestFacialWeightMap:
    def test_zero_iteration_gives_ones(self):
        cfg = FacialWeightConfig(PAPER_ALPHA, np.ones((4, 4)), iter=0, total_iter=100)
        assert np.allclose(facial_weight_map(cfg), 1.0)

    def test_full_ramp_inside_mask(self):
        cfg = FacialWeightConfig(PAPER_ALPHA, np.ones((4, 4)), iter=100, total_iter=100)
        assert np.allclose(facial_weight_map(cfg), 1.2)

    def test_half_ramp(self):
        cfg = FacialWeightConfig(PAPER_ALPHA, np.ones((2, 2)), iter=50, total_iter=100)
        assert np.allclose(facial_weight_map(cfg), 1.1)

    def test_mask_limits_the_boost(self):
        mask = np.zeros((2, 2))
        mask[0, 0] = 1
        cfg = FacialWeightConfig(0.5, mask, iter=10, total_iter=10)
        out = facial_weight_map(cfg)
        assert out[0, 0] == 1.5
        assert out[1, 1] == 1.0

    def test_monotone_in_iter_and_saturates(self):
        mask = np.ones((3, 3))
        prev = None
        for it in (0, 10, 25, 50, 99, 100, 150, 1000):
            out = facial_weight_map(FacialWeightConfig(0.3, mask, it, 100))
            if prev is not None:
                assert np.all(out >= prev - 1e-15)
            prev = out
        late = facial_weight_map(FacialWeightConfig(0.3, mask, 100, 100))
        later = facial_weight_map(FacialWeightConfig(0.3, mask, 5000, 100))
        assert np.array_equal(late, later)

    def test_zero_total_iter_rejected(self):
        with pytest.raises(ValueError):
            facial_weight_map(FacialWeightConfig(0.1, np.ones((2, 2)), 0, 0))

    def test_values_stay_in_declared_range(self):
        rng = np.random.default_rng(0)
        mask = (rng.random((8, 8)) < 0.5).astype(float)
        out = facial_weight_map(FacialWeightConfig(0.7, mask, 3, 7))
        assert out.min() >= 1.0 and out.max() <= 1.7


class TestWeightedPerceptual:
    def test_identical_stacks_zero(self):
        rng = np.random.default_rng(1)
        feats = [rng.normal(0, 1, (4, 4, 3)), rng.normal(0, 1, (2, 2, 5))]
        cfg = FacialWeightConfig(0.2, np.ones((4, 4)), 10, 10)
        assert weighted_perceptual(feats, feats, cfg) == 0.0

    def test_single_site_hand_value(self):
        # one 1x1x1 layer, feature diff 2, weight 1.2 -> 1.2 * 4 = 4.8
        a = [np.array([[[2.0]]])]
        b = [np.array([[[0.0]]])]
        cfg = FacialWeightConfig(0.2, np.ones((1, 1)), iter=10, total_iter=10)
        assert np.isclose(weighted_perceptual(a, b, cfg), 4.8)

    def test_alpha_zero_equals_unweighted(self):
        rng = np.random.default_rng(2)
        a = [rng.normal(0, 1, (6, 6, 4))]
        b = [rng.normal(0, 1, (6, 6, 4))]
        cfg0 = FacialWeightConfig(0.0, np.ones((12, 12)), 5, 10)
        plain = float(np.mean((a[0] - b[0]) ** 2))
        assert np.isclose(weighted_perceptual(a, b, cfg0), plain)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a = [rng.normal(0, 1, (4, 4, 2))]
        b = [rng.normal(0, 1, (4, 4, 2))]
        cfg = FacialWeightConfig(0.4, (rng.random((8, 8)) < 0.5).astype(float), 3, 9)
        assert np.isclose(weighted_perceptual(a, b, cfg), weighted_perceptual(b, a, cfg))

    def test_shape_mismatch_rejected(self):
        cfg = FacialWeightConfig(0.2, np.ones((2, 2)), 1, 2)
        with pytest.raises(ValueError):
            weighted_perceptual([np.zeros((2, 2, 1))], [np.zeros((3, 3, 1))], cfg)

    def test_mask_resampled_to_layer_resolution(self):
        mask = np.zeros((4, 4))
        mask[:2] = 1.0  # top half
        a = [np.ones((2, 2, 1))]
        b = [np.zeros((2, 2, 1))]
        cfg = FacialWeightConfig(1.0, mask, 10, 10)
        # weights: top row 2.0, bottom row 1.0 -> mean = 1.5
        assert np.isclose(weighted_perceptual(a, b, cfg), 1.5)


class TestTotalLoss:
    def test_all_zero(self):
        assert total_loss(0, 0, 0, 0, PAPER_WEIGHTS) == 0.0

    def test_unit_components_with_stated_weights(self):
        assert np.isclose(total_loss(1, 1, 1, 1, PAPER_WEIGHTS), 2.105)

    def test_doubling_weights_doubles_loss(self):
        rng = np.random.default_rng(4)
        parts = rng.random(4)
        doubled = LossWeights(2.0, 2.0, 0.2, 0.01)
        assert np.isclose(
            total_loss(*parts, doubled), 2 * total_loss(*parts, PAPER_WEIGHTS)
        )

    def test_linear_in_each_component(self):
        base = total_loss(1, 0, 0, 0, PAPER_WEIGHTS)
        assert np.isclose(total_loss(3, 0, 0, 0, PAPER_WEIGHTS), 3 * base)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(w_l1=-1.0)

    def test_nonfinite_component_rejected(self):
        with pytest.raises(ValueError):
            total_loss(np.nan, 0, 0, 0, PAPER_WEIGHTS)


def test_offset_loss_is_mean_squared_offset():
    maps = np.zeros((2, 2, 14), dtype=np.float32)
    maps[0, 0, 0:3] = [1.0, 2.0, 2.0]  # squared norm 9 over 3 channels
    mask = np.zeros((2, 2))
    mask[0, 0] = 1
    pair = GaussianMapPair(maps, np.zeros((2, 2, 14), np.float32), mask, np.zeros((2, 2)))
    assert np.isclose(offset_loss(pair), 3.0)
    empty = GaussianMapPair(
        np.zeros((2, 2, 14), np.float32), np.zeros((2, 2, 14), np.float32),
        np.zeros((2, 2)), np.zeros((2, 2)),
    )
    assert offset_loss(empty) == 0.0


class TestFitGenerator:
    def test_zero_iterations_returns_initial_weights(self):
        scene = synthetic.make_fit_scene(seed=0)
        cfg = FacialWeightConfig(PAPER_ALPHA, scene.face_mask, 0, 1)
        result = fit_generator(scene, 0, PAPER_WEIGHTS, cfg, seed=0)
        assert result.weights == scene.weights

    def test_loss_never_increases_stationary_objective(self):
        scene = synthetic.make_fit_scene(seed=1)
        cfg = FacialWeightConfig(0.0, scene.face_mask, 0, 40)
        result = fit_generator(scene, 40, PAPER_WEIGHTS, cfg, seed=1)
        assert result.history[-1] <= result.history[0]
        assert all(a >= b - 1e-15 for a, b in zip(result.history, result.history[1:]))

    def test_end_loss_bounded_under_final_ramp(self):
        # with the facial ramp active, end <= start holds under the final map
        scene = synthetic.make_fit_scene(seed=6)
        cfg = FacialWeightConfig(PAPER_ALPHA, scene.face_mask, 0, 30)
        result = fit_generator(scene, 30, PAPER_WEIGHTS, cfg, seed=2)
        from gsavatar import pipeline
        from gsavatar.loss import offset_loss, total_loss, weighted_perceptual

        def evaluate(w):
            value = 0.0
            for frame in scene.frames():
                rendered, gmaps = pipeline.render_frame(
                    scene.template, frame.pose, w, scene.camera, posemap=frame.pose_map
                )
                value += total_loss(
                    float(np.mean(np.abs(rendered.color - frame.target_image))),
                    float(np.mean(np.abs(rendered.alpha - frame.target_mask))),
                    weighted_perceptual(
                        scene.features(rendered.color), frame.target_features, cfg.at(30)
                    ),
                    offset_loss(gmaps),
                    PAPER_WEIGHTS,
                )
            return value / len(scene.poses)

        assert evaluate(result.weights) <= evaluate(scene.weights) + 1e-12

    def test_two_gaussian_toy_reduces_l1(self):
        from gsavatar import pipeline

        scene = synthetic.make_fit_scene(seed=2)
        target = synthetic.two_gaussian_target(scene.camera)
        scene._frames = [
            synthetic.FitFrame(
                scene.poses[0],
                scene._frames[0].pose_map,
                target.color,
                target.alpha,
                scene.extractor(target.color),
            )
        ]

        def l1_of(weights):
            img, _ = pipeline.render_frame(
                scene.template, scene.poses[0], weights, scene.camera,
                posemap=scene._frames[0].pose_map,
            )
            return float(np.mean(np.abs(img.color - target.color)))

        cfg = FacialWeightConfig(PAPER_ALPHA, scene.face_mask, 0, 200)
        result = fit_generator(scene, 200, PAPER_WEIGHTS, cfg, seed=3)
        assert l1_of(result.weights) < l1_of(scene.weights)

    def test_deterministic_given_seed(self):
        scene = synthetic.make_fit_scene(seed=4)
        cfg = FacialWeightConfig(PAPER_ALPHA, scene.face_mask, 0, 10)
        a = fit_generator(scene, 10, PAPER_WEIGHTS, cfg, seed=5)
        b = fit_generator(scene, 10, PAPER_WEIGHTS, cfg, seed=5)
        assert a.weights == b.weights
        assert a.history == b.history


def test_feature_extractor_fixed_and_seeded():
    rng = np.random.default_rng(5)
    img = rng.random((16, 16, 3))
    a = FeatureExtractor(seed=7)(img)
    b = FeatureExtractor(seed=7)(img)
    assert len(a) == 3
    for fa, fb in zip(a, b):
        assert np.array_equal(fa, fb)
    c = FeatureExtractor(seed=8)(img)
    assert not np.array_equal(a[0], c[0])
