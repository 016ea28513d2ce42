"""Photometric augmentation: hue, brightness, exposure, blur, pixel noise.

All operations preserve geometry, so annotation boxes never change. Color
adjustments run in hue-saturation-value space: brightness scales the value
channel, exposure applies a gamma-style gain. Zero parameters are strict
no-ops, so the all-zero augmentation returns a bit-identical image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import InvalidParameter

HUE_RANGE_DEG = 15.0
BRIGHTNESS_RANGE_PCT = 15.0
EXPOSURE_RANGE_PCT = 10.0
BLUR_MAX_PX = 2.5
NOISE_MAX_FRAC = 0.001


@dataclass(frozen=True)
class AugmentParams:
    hue_deg: float = 0.0
    brightness_pct: float = 0.0
    exposure_pct: float = 0.0
    blur_px: float = 0.0
    noise_frac: float = 0.0

    def __post_init__(self):
        if abs(self.hue_deg) > HUE_RANGE_DEG:
            raise InvalidParameter(f"hue_deg outside [-{HUE_RANGE_DEG}, {HUE_RANGE_DEG}]")
        if abs(self.brightness_pct) > BRIGHTNESS_RANGE_PCT:
            raise InvalidParameter("brightness_pct outside range")
        if abs(self.exposure_pct) > EXPOSURE_RANGE_PCT:
            raise InvalidParameter("exposure_pct outside range")
        if not (0.0 <= self.blur_px <= BLUR_MAX_PX):
            raise InvalidParameter(f"blur_px outside [0, {BLUR_MAX_PX}]")
        if not (0.0 <= self.noise_frac <= NOISE_MAX_FRAC):
            raise InvalidParameter(f"noise_frac outside [0, {NOISE_MAX_FRAC}]")


def sample_params(rng) -> AugmentParams:
    """Draw one parameter set uniformly over the allowed ranges."""
    return AugmentParams(
        hue_deg=rng.uniform(-HUE_RANGE_DEG, HUE_RANGE_DEG),
        brightness_pct=rng.uniform(-BRIGHTNESS_RANGE_PCT, BRIGHTNESS_RANGE_PCT),
        exposure_pct=rng.uniform(-EXPOSURE_RANGE_PCT, EXPOSURE_RANGE_PCT),
        blur_px=rng.uniform(0.0, BLUR_MAX_PX),
        noise_frac=rng.uniform(0.0, NOISE_MAX_FRAC),
    )


def _rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = np.max(rgb, axis=-1)
    c = v - np.min(rgb, axis=-1)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        hr = np.where(c > 0, ((g - b) / np.where(c > 0, c, 1.0)) % 6.0, 0.0)
        hg = np.where(c > 0, (b - r) / np.where(c > 0, c, 1.0) + 2.0, 0.0)
        hb = np.where(c > 0, (r - g) / np.where(c > 0, c, 1.0) + 4.0, 0.0)
    h = np.where(v == r, hr, np.where(v == g, hg, hb)) / 6.0
    return np.stack([h % 1.0, s, v], axis=-1)


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def augment(pixels: np.ndarray, params: AugmentParams, seed: int = 0) -> np.ndarray:
    """Apply the parameter set to an (H, W, 3) uint8 image.

    Noise replaces exactly round(noise_frac * H * W) pixels with seeded
    random values guaranteed to differ from the originals.
    """
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise InvalidParameter("expected an (H, W, 3) uint8 image")
    out = pixels.copy()

    if params.hue_deg != 0.0 or params.brightness_pct != 0.0 or params.exposure_pct != 0.0:
        hsv = _rgb_to_hsv(out.astype(np.float64) / 255.0)
        if params.hue_deg != 0.0:
            hsv[..., 0] = (hsv[..., 0] + params.hue_deg / 360.0) % 1.0
        if params.brightness_pct != 0.0:
            hsv[..., 2] = np.clip(hsv[..., 2] * (1.0 + params.brightness_pct / 100.0), 0.0, 1.0)
        if params.exposure_pct != 0.0:
            gamma = 1.0 - params.exposure_pct / 100.0
            hsv[..., 2] = np.clip(hsv[..., 2], 0.0, 1.0) ** gamma
        rgb = _hsv_to_rgb(hsv)
        out = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)

    if params.blur_px > 0.0:
        blurred = np.empty_like(out, dtype=np.float64)
        for ch in range(3):
            blurred[..., ch] = ndimage.gaussian_filter(
                out[..., ch].astype(np.float64), sigma=params.blur_px, mode="nearest"
            )
        out = np.clip(np.rint(blurred), 0, 255).astype(np.uint8)

    if params.noise_frac > 0.0:
        h, w, _ = out.shape
        n = round(params.noise_frac * h * w)
        if n > 0:
            rng = np.random.default_rng(seed)
            flat = out.reshape(-1, 3)
            idx = rng.choice(h * w, size=n, replace=False)
            vals = rng.integers(0, 256, size=(n, 3), dtype=np.int64)
            same = (vals == flat[idx].astype(np.int64)).all(axis=1)
            vals[same, 0] = (vals[same, 0] + 1) % 256  # force a visible change
            flat[idx] = vals.astype(np.uint8)
            out = flat.reshape(h, w, 3)

    return out
