import numpy as np
import pytest

from cookstate.augment import (
    AffineParams,
    AugmentConfig,
    apply_affine,
    augment,
    sample_params,
)
from cookstate.errors import ConfigError
from cookstate.rng import Rng


class TestConfig:
    def test_zero_config(self):
        cfg = AugmentConfig.zero()
        assert cfg.rotation_max_deg == 0 and cfg.zoom_frac == 0

    def test_validation(self):
        with pytest.raises(ConfigError):
            AugmentConfig(rotation_max_deg=181)
        with pytest.raises(ConfigError):
            AugmentConfig(zoom_frac=1.5)
        with pytest.raises(ConfigError):
            AugmentConfig(fill_mode="wrap")


class TestIdentity:
    def test_zero_params_bit_identical(self):
        img = np.random.default_rng(0).uniform(0, 255, size=(3, 7, 9)).astype(np.float32)
        out = apply_affine(img, AffineParams())
        np.testing.assert_array_equal(out, img)

    def test_zero_config_augment_identity(self):
        img = np.random.default_rng(1).uniform(0, 255, size=(3, 6, 6)).astype(np.float32)
        out = augment(img, AugmentConfig.zero(), Rng(3).stream(4))
        np.testing.assert_array_equal(out, img)


class TestRotation:
    def test_forced_90_on_2x2(self):
        a, b, c, d = 10.0, 20.0, 30.0, 40.0
        img = np.array([[[a, b], [c, d]]], dtype=np.float32)
        out = apply_affine(img, AffineParams(rotation_deg=90.0))
        np.testing.assert_array_equal(out[0], [[b, d], [a, c]])

    def test_four_quarter_turns_identity(self):
        img = np.random.default_rng(2).uniform(0, 255, size=(3, 8, 8)).astype(np.float32)
        out = img
        for _ in range(4):
            out = apply_affine(out, AffineParams(rotation_deg=90.0))
        np.testing.assert_array_equal(out, img)

    def test_180_equals_flips(self):
        img = np.random.default_rng(3).uniform(0, 255, size=(1, 5, 6)).astype(np.float32)
        out = apply_affine(img, AffineParams(rotation_deg=180.0))
        np.testing.assert_array_equal(out[0], img[0, ::-1, ::-1])


class TestFlipShift:
    def test_horizontal_flip_mirror(self):
        img = np.array([[[1.0, 2.0, 3.0]]], dtype=np.float32)
        out = apply_affine(img, AffineParams(flip=True))
        np.testing.assert_array_equal(out[0], [[3.0, 2.0, 1.0]])

    def test_integer_shift_with_zero_fill(self):
        img = np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32)
        out = apply_affine(img, AffineParams(shift_x=1.0), fill_mode="zero")
        np.testing.assert_array_equal(out[0], [[0.0, 1.0], [0.0, 3.0]])

    def test_integer_shift_with_nearest_fill(self):
        img = np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32)
        out = apply_affine(img, AffineParams(shift_x=1.0), fill_mode="nearest")
        np.testing.assert_array_equal(out[0], [[1.0, 1.0], [3.0, 3.0]])


class TestZoom:
    def test_zoom_2x_center_preserved(self):
        img = np.zeros((1, 4, 4), dtype=np.float32)
        img[0, 1:3, 1:3] = 100.0
        out = apply_affine(img, AffineParams(zoom=2.0))
        # magnification spreads the bright center; total brightness grows
        assert out.sum() > img.sum()
        assert out.max() <= 100.0


class TestContracts:
    @pytest.mark.parametrize("fill", ["nearest", "zero"])
    def test_shape_and_range_preserved(self, fill):
        gen = Rng(7).stream(4)
        cfg = AugmentConfig(fill_mode=fill)
        img = np.random.default_rng(5).uniform(0, 255, size=(3, 16, 16)).astype(np.float32)
        for _ in range(20):
            out = augment(img, cfg, gen)
            assert out.shape == img.shape
            assert out.min() >= 0.0 and out.max() <= 255.0

    def test_purity(self):
        img = np.random.default_rng(6).uniform(0, 255, size=(3, 5, 5)).astype(np.float32)
        img0 = img.copy()
        augment(img, AugmentConfig(), Rng(0).stream(4))
        np.testing.assert_array_equal(img, img0)

    def test_sampling_is_seeded(self):
        cfg = AugmentConfig()
        p1 = sample_params(cfg, Rng(9).stream(4), 32, 32)
        p2 = sample_params(cfg, Rng(9).stream(4), 32, 32)
        assert p1 == p2
        p3 = sample_params(cfg, Rng(10).stream(4), 32, 32)
        assert p1 != p3

    def test_sampled_ranges(self):
        cfg = AugmentConfig(rotation_max_deg=90, width_shift_frac=0.3,
                            height_shift_frac=0.3, horizontal_flip_prob=0.3,
                            shear_frac=0.3, zoom_frac=0.3)
        gen = Rng(11).stream(4)
        flips = 0
        for _ in range(500):
            p = sample_params(cfg, gen, 100, 50)
            assert -90 <= p.rotation_deg <= 90
            assert -30 <= p.shift_x <= 30
            assert -15 <= p.shift_y <= 15
            assert -0.3 <= p.shear <= 0.3
            assert 0.7 <= p.zoom <= 1.3
            flips += p.flip
        assert 100 < flips < 200  # ~30% of 500

    def test_params_json(self):
        p = AffineParams(rotation_deg=45.0, flip=True)
        assert '"rotation_deg": 45.0' in p.to_json()
