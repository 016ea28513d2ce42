"""Simulated scanning rangefinder and GPS with base-station corrections.

The GPS error model is a slowly varying bias shared by every receiver in
the area (a stand-in for atmospheric delay) plus white noise whose scale
depends on the fix regime. A stationary base station at a known location
measures the same bias, so applying its correction cancels the bias and
leaves only the regime white noise.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParameter, NoFix
from .world import FieldMap, RectObstacle, RoverState


class FixType(str, enum.Enum):
    NONE = "NONE"
    GPS_3D = "GPS_3D"
    RTK_FLOAT = "RTK_FLOAT"
    RTK_FIXED = "RTK_FIXED"

    @property
    def quality(self) -> int:
        return _FIX_QUALITY[self]


_FIX_QUALITY = {
    FixType.NONE: 0,
    FixType.GPS_3D: 1,
    FixType.RTK_FLOAT: 2,
    FixType.RTK_FIXED: 3,
}


@dataclass(frozen=True)
class LidarScan:
    """One sweep; beams are (bearing relative to rover heading, range).

    A beam with range None had no return within max_range.
    """

    timestamp: float
    beams: tuple[tuple[float, float | None], ...]

    def returns(self) -> list[tuple[float, float]]:
        return [(b, r) for b, r in self.beams if r is not None]


@dataclass(frozen=True)
class LidarConfig:
    fov_rad: float = math.radians(350.0)
    n_beams: int = 64
    max_range_m: float = 50.0
    noise_sigma_m: float = 0.03


DEFAULT_LIDAR = LidarConfig()

_MAX_FOV = math.radians(350.0)


def _ray_rect_enter(px, py, dx, dy, x0, y0, x1, y1):
    """Vectorized ray/box entry distance; inf where the ray misses."""
    dx = np.where(np.abs(dx) < 1e-12, 1e-12, dx)
    dy = np.where(np.abs(dy) < 1e-12, 1e-12, dy)
    tx1 = (x0 - px) / dx
    tx2 = (x1 - px) / dx
    ty1 = (y0 - py) / dy
    ty2 = (y1 - py) / dy
    t_near = np.maximum(np.minimum(tx1, tx2), np.minimum(ty1, ty2))
    t_far = np.minimum(np.maximum(tx1, tx2), np.maximum(ty1, ty2))
    hit = (t_near <= t_far) & (t_far >= 0.0)
    t = np.where(t_near > 0.0, t_near, 0.0)
    return np.where(hit, t, np.inf)


def _ray_rect_exit(px, py, dx, dy, x0, y0, x1, y1):
    dx = np.where(np.abs(dx) < 1e-12, 1e-12, dx)
    dy = np.where(np.abs(dy) < 1e-12, 1e-12, dy)
    tx1 = (x0 - px) / dx
    tx2 = (x1 - px) / dx
    ty1 = (y0 - py) / dy
    ty2 = (y1 - py) / dy
    t_far = np.minimum(np.maximum(tx1, tx2), np.maximum(ty1, ty2))
    return np.where(t_far >= 0.0, t_far, np.inf)


def _ray_circle(px, py, dx, dy, cx, cy, r):
    ox = px - cx
    oy = py - cy
    b = ox * dx + oy * dy
    c = ox * ox + oy * oy - r * r
    disc = b * b - c
    sq = np.sqrt(np.maximum(disc, 0.0))
    t_in = -b - sq
    t_out = -b + sq
    t = np.where(t_in > 0.0, t_in, np.where(t_out > 0.0, 0.0, np.inf))
    return np.where(disc >= 0.0, t, np.inf)


def scan(
    state: RoverState,
    fmap: FieldMap,
    fov: float = DEFAULT_LIDAR.fov_rad,
    n_beams: int = DEFAULT_LIDAR.n_beams,
    max_range: float = DEFAULT_LIDAR.max_range_m,
    rng: random.Random | int = 0,
    noise_sigma: float = DEFAULT_LIDAR.noise_sigma_m,
    include_boundary: bool = True,
) -> LidarScan:
    """Cast n_beams rays across the field of view and return noisy ranges.

    Each beam reports the nearest obstacle (or field boundary) intersection
    plus seeded Gaussian noise, or None when nothing lies within max_range.
    """
    if not (0 < fov <= _MAX_FOV + 1e-12):
        raise InvalidParameter("fov must be in (0, 350 degrees]")
    if n_beams < 2:
        raise InvalidParameter("n_beams must be at least 2")
    if max_range <= 0:
        raise InvalidParameter("max_range must be positive")
    if isinstance(rng, int):
        rng = random.Random(rng)

    bearings = np.linspace(-fov / 2.0, fov / 2.0, n_beams)
    angles = state.heading + bearings
    dx = np.cos(angles)
    dy = np.sin(angles)
    px = np.full(n_beams, state.x)
    py = np.full(n_beams, state.y)

    dist = np.full(n_beams, np.inf)
    if include_boundary:
        dist = np.minimum(dist, _ray_rect_exit(px, py, dx, dy, 0.0, 0.0, fmap.width_m, fmap.height_m))
    for obs in fmap.obstacles:
        if isinstance(obs, RectObstacle):
            t = _ray_rect_enter(px, py, dx, dy, obs.x, obs.y, obs.x1, obs.y1)
        else:
            t = _ray_circle(px, py, dx, dy, obs.x, obs.y, obs.r)
        dist = np.minimum(dist, t)

    beams = []
    for i in range(n_beams):
        d = dist[i]
        if not math.isfinite(d) or d > max_range:
            beams.append((float(bearings[i]), None))
            continue
        if noise_sigma > 0:
            d = d + rng.gauss(0.0, noise_sigma)
        d = min(max(d, 1e-9), max_range)
        beams.append((float(bearings[i]), float(d)))
    return LidarScan(timestamp=0.0, beams=tuple(beams))


@dataclass(frozen=True)
class GpsFix:
    est_x: float | None
    est_y: float | None
    fix_type: FixType
    horizontal_sigma_m: float


@dataclass(frozen=True)
class RtkCorrection:
    """Base-known minus base-measured offset, valid near the base station."""

    t: float
    dx: float
    dy: float


@dataclass(frozen=True)
class GpsConfig:
    """Per-regime accuracy plus the shared-bias walk parameters.

    sigma values are horizontal distance RMS; per-axis noise uses
    sigma / sqrt(2) so the radial error RMS matches the configured value.
    """

    sigma_gps3d_m: float = 2.5
    sigma_rtk_float_m: float = 0.3
    sigma_rtk_fixed_m: float = 0.02
    bias_sigma_m: float = 1.5
    bias_walk_m_per_sqrt_s: float = 0.05
    base_noise_sigma_m: float = 0.0
    staleness_s: float = 3.0
    fix_hold_s: float = 5.0

    def sigma_for(self, mode: FixType) -> float:
        if mode == FixType.GPS_3D:
            return self.sigma_gps3d_m
        if mode == FixType.RTK_FLOAT:
            return self.sigma_rtk_float_m
        if mode == FixType.RTK_FIXED:
            return self.sigma_rtk_fixed_m
        raise NoFix("no accuracy regime for fix type NONE")

    @classmethod
    def noiseless(cls) -> "GpsConfig":
        return cls(
            sigma_gps3d_m=0.0,
            sigma_rtk_float_m=0.0,
            sigma_rtk_fixed_m=0.0,
            bias_sigma_m=0.0,
            bias_walk_m_per_sqrt_s=0.0,
        )


DEFAULT_GPS = GpsConfig()


def gps_measure(
    state: RoverState,
    mode: FixType,
    rng: random.Random | int,
    cfg: GpsConfig = DEFAULT_GPS,
    bias: tuple[float, float] = (0.0, 0.0),
) -> GpsFix:
    """Single position measurement: truth + shared bias + regime white noise."""
    if mode == FixType.NONE:
        raise NoFix("cannot measure with fix type NONE")
    if isinstance(rng, int):
        rng = random.Random(rng)
    sigma = cfg.sigma_for(mode)
    axis = sigma / math.sqrt(2.0)
    nx = rng.gauss(0.0, axis) if sigma > 0 else 0.0
    ny = rng.gauss(0.0, axis) if sigma > 0 else 0.0
    return GpsFix(
        est_x=state.x + bias[0] + nx,
        est_y=state.y + bias[1] + ny,
        fix_type=mode,
        horizontal_sigma_m=sigma,
    )


class GpsChannel:
    """Evolving shared-bias GPS model for one simulation run.

    The bias random-walks over time and is common to the rover and the base
    station, which is what makes differential correction work.
    """

    def __init__(self, cfg: GpsConfig = DEFAULT_GPS, rng: random.Random | int = 0):
        self.cfg = cfg
        self.rng = random.Random(rng) if isinstance(rng, int) else rng
        self.bias_x = self.rng.gauss(0.0, cfg.bias_sigma_m) if cfg.bias_sigma_m > 0 else 0.0
        self.bias_y = self.rng.gauss(0.0, cfg.bias_sigma_m) if cfg.bias_sigma_m > 0 else 0.0

    def advance(self, dt: float) -> None:
        w = self.cfg.bias_walk_m_per_sqrt_s
        if w > 0 and dt > 0:
            step = w * math.sqrt(dt)
            self.bias_x += self.rng.gauss(0.0, step)
            self.bias_y += self.rng.gauss(0.0, step)

    def measure(self, state: RoverState, mode: FixType) -> GpsFix:
        return gps_measure(state, mode, self.rng, self.cfg, (self.bias_x, self.bias_y))

    def measure_base(self, base_x: float, base_y: float) -> tuple[float, float]:
        """Base-station self measurement; shares the bias, own (small) noise."""
        s = self.cfg.base_noise_sigma_m
        axis = s / math.sqrt(2.0) if s > 0 else 0.0
        nx = self.rng.gauss(0.0, axis) if s > 0 else 0.0
        ny = self.rng.gauss(0.0, axis) if s > 0 else 0.0
        return base_x + self.bias_x + nx, base_y + self.bias_y + ny


def base_station_correction(
    base_known: tuple[float, float], base_measured: tuple[float, float], t: float
) -> RtkCorrection:
    """Correction is known minus measured; adding it to a fix removes the bias."""
    kx, ky = base_known
    mx, my = base_measured
    if not all(math.isfinite(v) for v in (kx, ky, mx, my)):
        raise InvalidParameter("base station points must be finite")
    return RtkCorrection(t=t, dx=kx - mx, dy=ky - my)


def apply_correction(
    fix: GpsFix,
    corr: RtkCorrection | None,
    now: float,
    staleness_s: float = DEFAULT_GPS.staleness_s,
    *,
    fix_hold_s: float = DEFAULT_GPS.fix_hold_s,
    stream_since: float | None = None,
    cfg: GpsConfig = DEFAULT_GPS,
) -> GpsFix:
    """Shift a fix by a fresh correction and update its regime.

    A fresh correction upgrades GPS_3D to RTK_FLOAT, and to RTK_FIXED once
    the correction stream has been continuous for fix_hold_s (as reported
    via stream_since). A stale or missing correction leaves the position
    unchanged and downgrades any RTK fix to GPS_3D.
    """
    if fix.est_x is None or fix.est_y is None or fix.fix_type == FixType.NONE:
        raise NoFix("cannot correct a fix without a position")
    fresh = corr is not None and (now - corr.t) <= staleness_s
    if not fresh:
        if fix.fix_type in (FixType.RTK_FLOAT, FixType.RTK_FIXED):
            return replace(
                fix, fix_type=FixType.GPS_3D, horizontal_sigma_m=cfg.sigma_for(FixType.GPS_3D)
            )
        return fix
    held = stream_since is not None and (now - stream_since) >= fix_hold_s
    new_type = FixType.RTK_FIXED if held else FixType.RTK_FLOAT
    return GpsFix(
        est_x=fix.est_x + corr.dx,
        est_y=fix.est_y + corr.dy,
        fix_type=new_type,
        horizontal_sigma_m=cfg.sigma_for(new_type),
    )


class RtkFilter:
    """Tracks correction-stream continuity and the resulting fix regime."""

    def __init__(self, cfg: GpsConfig = DEFAULT_GPS):
        self.cfg = cfg
        self.latest: RtkCorrection | None = None
        self.stream_since: float | None = None

    def observe(self, corr: RtkCorrection) -> None:
        if self.latest is None or (corr.t - self.latest.t) > self.cfg.staleness_s:
            self.stream_since = corr.t
        elif self.stream_since is None:
            self.stream_since = corr.t
        self.latest = corr

    def regime(self, now: float) -> FixType:
        if self.latest is None or (now - self.latest.t) > self.cfg.staleness_s:
            return FixType.GPS_3D
        if self.stream_since is not None and (now - self.stream_since) >= self.cfg.fix_hold_s:
            return FixType.RTK_FIXED
        return FixType.RTK_FLOAT

    def correct(self, fix: GpsFix, now: float) -> GpsFix:
        return apply_correction(
            fix,
            self.latest,
            now,
            self.cfg.staleness_s,
            fix_hold_s=self.cfg.fix_hold_s,
            stream_since=self.stream_since,
            cfg=self.cfg,
        )
