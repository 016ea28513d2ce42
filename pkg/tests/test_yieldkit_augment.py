import numpy as np
import pytest

from fieldrover.errors import InvalidParameter
from fieldrover.yieldkit.augment import AugmentParams, augment, sample_params


def checkerboard(h=64, w=64):
    rng = np.random.default_rng(1234)
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


class TestAugment:
    def test_zero_params_identity(self):
        img = checkerboard()
        out = augment(img, AugmentParams(), seed=1)
        assert np.array_equal(out, img)
        assert out is not img

    def test_hue_rotation_on_pure_red(self):
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        img[..., 0] = 255  # hue 0, full saturation, full value
        out = augment(img, AugmentParams(hue_deg=15.0), seed=0).astype(np.float64)
        r, g, b = out[0, 0]
        assert r == 255.0 and b == 0.0
        # hue of the result: for max=r, hue_deg = 60 * (g - b) / delta
        hue = 60.0 * (g - b) / (r - b)
        assert hue == pytest.approx(15.0, abs=0.5)
        assert out[..., 0].min() == 255.0  # value channel untouched

    def test_brightness_scales_value(self):
        img = np.full((8, 8, 3), 100, dtype=np.uint8)
        out = augment(img, AugmentParams(brightness_pct=10.0), seed=0)
        assert np.all(out == 110)
        out = augment(img, AugmentParams(brightness_pct=-10.0), seed=0)
        assert np.all(out == 90)

    def test_exposure_gamma_direction(self):
        img = np.full((8, 8, 3), 128, dtype=np.uint8)
        brighter = augment(img, AugmentParams(exposure_pct=10.0), seed=0)
        darker = augment(img, AugmentParams(exposure_pct=-10.0), seed=0)
        assert brighter[0, 0, 0] > 128 > darker[0, 0, 0]

    def test_blur_smooths_edge(self):
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        img[:, 8:] = 255
        out = augment(img, AugmentParams(blur_px=2.0), seed=0)
        assert 0 < int(out[8, 8, 0]) < 255

    def test_noise_changes_exact_pixel_count(self):
        img = checkerboard(1000, 1000)
        out = augment(img, AugmentParams(noise_frac=0.001), seed=42)
        changed = int((out != img).any(axis=2).sum())
        assert changed == 1000

    def test_noise_seeded_deterministic(self):
        img = checkerboard(100, 100)
        a = augment(img, AugmentParams(noise_frac=0.001), seed=7)
        b = augment(img, AugmentParams(noise_frac=0.001), seed=7)
        c = augment(img, AugmentParams(noise_frac=0.001), seed=8)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_out_of_range_rejected(self):
        for kwargs in (
            {"hue_deg": 15.1},
            {"hue_deg": -16.0},
            {"brightness_pct": 20.0},
            {"exposure_pct": -11.0},
            {"blur_px": 2.6},
            {"blur_px": -0.1},
            {"noise_frac": 0.002},
        ):
            with pytest.raises(InvalidParameter):
                AugmentParams(**kwargs)

    def test_sampled_params_in_range(self):
        import random

        rng = random.Random(3)
        for _ in range(100):
            sample_params(rng)  # constructor validates ranges

    def test_wrong_shape_rejected(self):
        with pytest.raises(InvalidParameter):
            augment(np.zeros((4, 4), dtype=np.uint8), AugmentParams(), seed=0)
