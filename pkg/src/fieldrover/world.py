"""Field environment: obstacles, occupancy grid, rover kinematics.

The world is a planar ENU frame in meters with (0, 0) at the field's
south-west corner. An optional geographic anchor converts local coordinates
to lat/lon with an equirectangular approximation, which is adequate at
field scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParameter, WorldFileError

FREE = 0
OCCUPIED = 1

EARTH_RADIUS_M = 6378137.0


def wrap_angle(a: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class RectObstacle:
    """Axis-aligned rectangle; (x, y) is the min corner."""

    x: float
    y: float
    w: float
    h: float

    kind = "rect"

    @property
    def x1(self) -> float:
        return self.x + self.w

    @property
    def y1(self) -> float:
        return self.y + self.h

    def distance_to_point(self, px: float, py: float) -> float:
        dx = max(self.x - px, 0.0, px - self.x1)
        dy = max(self.y - py, 0.0, py - self.y1)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class CircleObstacle:
    x: float
    y: float
    r: float

    kind = "circle"

    def distance_to_point(self, px: float, py: float) -> float:
        return max(0.0, math.hypot(px - self.x, py - self.y) - self.r)


Obstacle = RectObstacle | CircleObstacle


@dataclass(frozen=True)
class GeoAnchor:
    """Geographic point anchoring local (0, 0)."""

    lat_deg: float
    lon_deg: float

    def to_geo(self, x: float, y: float) -> tuple[float, float]:
        lat = self.lat_deg + math.degrees(y / EARTH_RADIUS_M)
        lon = self.lon_deg + math.degrees(
            x / (EARTH_RADIUS_M * math.cos(math.radians(self.lat_deg)))
        )
        return lat, lon

    def to_local(self, lat: float, lon: float) -> tuple[float, float]:
        y = math.radians(lat - self.lat_deg) * EARTH_RADIUS_M
        x = math.radians(lon - self.lon_deg) * EARTH_RADIUS_M * math.cos(
            math.radians(self.lat_deg)
        )
        return x, y


@dataclass(frozen=True)
class FieldMap:
    width_m: float
    height_m: float
    obstacles: tuple[Obstacle, ...] = ()
    origin_geo: GeoAnchor | None = None

    def __post_init__(self):
        if not (self.width_m > 0 and self.height_m > 0):
            raise InvalidParameter("field dimensions must be positive")
        for obs in self.obstacles:
            if isinstance(obs, RectObstacle):
                if obs.w <= 0 or obs.h <= 0:
                    raise WorldFileError(f"degenerate rectangle obstacle {obs}")
                inside = (
                    obs.x >= 0
                    and obs.y >= 0
                    and obs.x1 <= self.width_m
                    and obs.y1 <= self.height_m
                )
            else:
                if obs.r <= 0:
                    raise WorldFileError(f"degenerate circle obstacle {obs}")
                inside = (
                    obs.x - obs.r >= 0
                    and obs.y - obs.r >= 0
                    and obs.x + obs.r <= self.width_m
                    and obs.y + obs.r <= self.height_m
                )
            if not inside:
                raise WorldFileError(f"obstacle not fully inside field bounds: {obs}")

    def boundary_distance(self, x: float, y: float) -> float:
        """Distance from an interior point to the nearest field edge."""
        return min(x, self.width_m - x, y, self.height_m - y)

    def obstacle_distance(self, x: float, y: float) -> float:
        if not self.obstacles:
            return math.inf
        return min(o.distance_to_point(x, y) for o in self.obstacles)


@dataclass(frozen=True)
class RoverState:
    x: float
    y: float
    heading: float = 0.0
    speed: float = 0.0
    steer_angle: float = 0.0
    battery_v: float = 16.8
    vibration: float = 5.0


@dataclass(frozen=True)
class KinematicsConfig:
    """Bicycle-model parameters for an RC-truck scale rover."""

    wheelbase_m: float = 0.5
    max_speed_mps: float = 5.0
    max_steer_rad: float = math.radians(30.0)
    max_accel_mps2: float = 2.5
    dt_s: float = 0.05


DEFAULT_KINEMATICS = KinematicsConfig()


class OccupancyGrid:
    """Binary grid over the field; cells flagged OCCUPIED near obstacles."""

    def __init__(self, cell_size_m: float, cols: int, rows: int, cells: np.ndarray):
        self.cell_size_m = cell_size_m
        self.cols = cols
        self.rows = rows
        self.cells = cells  # shape (rows, cols), uint8

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.rows and 0 <= col < self.cols

    def is_free(self, row: int, col: int) -> bool:
        return self.in_bounds(row, col) and self.cells[row, col] == FREE

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """Nearest containing cell, clamped to the grid."""
        col = min(max(int(x / self.cell_size_m), 0), self.cols - 1)
        row = min(max(int(y / self.cell_size_m), 0), self.rows - 1)
        return row, col

    def center_of(self, cell: tuple[int, int]) -> tuple[float, float]:
        row, col = cell
        return (col + 0.5) * self.cell_size_m, (row + 0.5) * self.cell_size_m


def _cell_rect_distance(
    cx0: float, cy0: float, cx1: float, cy1: float, obs: Obstacle
) -> float:
    """Euclidean distance between a closed cell rectangle and an obstacle."""
    if isinstance(obs, RectObstacle):
        dx = max(obs.x - cx1, cx0 - obs.x1, 0.0)
        dy = max(obs.y - cy1, cy0 - obs.y1, 0.0)
        return math.hypot(dx, dy)
    px = min(max(obs.x, cx0), cx1)
    py = min(max(obs.y, cy0), cy1)
    return max(0.0, math.hypot(obs.x - px, obs.y - py) - obs.r)


def _cell_properly_overlaps(
    cx0: float, cy0: float, cx1: float, cy1: float, obs: Obstacle
) -> bool:
    """Positive-area overlap; boundary touching does not count."""
    if isinstance(obs, RectObstacle):
        return cx0 < obs.x1 and obs.x < cx1 and cy0 < obs.y1 and obs.y < cy1
    px = min(max(obs.x, cx0), cx1)
    py = min(max(obs.y, cy0), cy1)
    return math.hypot(obs.x - px, obs.y - py) < obs.r


def rasterize(fmap: FieldMap, cell_size_m: float, inflation_m: float = 0.0) -> OccupancyGrid:
    """Rasterize the field onto a grid, marking cells near obstacles OCCUPIED.

    With zero inflation a cell is OCCUPIED iff it properly overlaps an
    obstacle. With positive inflation a cell is OCCUPIED iff its distance to
    an obstacle is strictly below the inflation, which guarantees every
    point within the inflation of an obstacle lands in an OCCUPIED cell.
    """
    if cell_size_m <= 0:
        raise InvalidParameter("cell_size_m must be positive")
    if inflation_m < 0:
        raise InvalidParameter("inflation_m must be non-negative")
    cols = math.ceil(fmap.width_m / cell_size_m)
    rows = math.ceil(fmap.height_m / cell_size_m)
    cells = np.zeros((rows, cols), dtype=np.uint8)
    for obs in fmap.obstacles:
        if isinstance(obs, RectObstacle):
            ox0, oy0, ox1, oy1 = obs.x, obs.y, obs.x1, obs.y1
        else:
            ox0, oy0 = obs.x - obs.r, obs.y - obs.r
            ox1, oy1 = obs.x + obs.r, obs.y + obs.r
        # only cells overlapping the inflated bounding box can be affected
        c0 = max(int((ox0 - inflation_m) / cell_size_m) - 1, 0)
        c1 = min(int((ox1 + inflation_m) / cell_size_m) + 1, cols - 1)
        r0 = max(int((oy0 - inflation_m) / cell_size_m) - 1, 0)
        r1 = min(int((oy1 + inflation_m) / cell_size_m) + 1, rows - 1)
        for row in range(r0, r1 + 1):
            cy0 = row * cell_size_m
            cy1 = cy0 + cell_size_m
            for col in range(c0, c1 + 1):
                if cells[row, col]:
                    continue
                cx0 = col * cell_size_m
                cx1 = cx0 + cell_size_m
                if inflation_m > 0:
                    hit = _cell_rect_distance(cx0, cy0, cx1, cy1, obs) < inflation_m
                else:
                    hit = _cell_properly_overlaps(cx0, cy0, cx1, cy1, obs)
                if hit:
                    cells[row, col] = OCCUPIED
    return OccupancyGrid(cell_size_m, cols, rows, cells)


def step_kinematics(
    state: RoverState,
    throttle: float,
    steer: float,
    dt: float,
    cfg: KinematicsConfig = DEFAULT_KINEMATICS,
) -> RoverState:
    """Advance the bicycle model one step.

    Pose integrates with the current speed, then speed tracks
    throttle * max_speed under the acceleration limit. Inputs are clamped to
    actuator limits; heading is renormalized to [-pi, pi).
    """
    if dt <= 0:
        raise InvalidParameter("dt must be positive")
    throttle = min(max(throttle, 0.0), 1.0)
    steer = min(max(steer, -cfg.max_steer_rad), cfg.max_steer_rad)
    x = state.x + state.speed * math.cos(state.heading) * dt
    y = state.y + state.speed * math.sin(state.heading) * dt
    heading = wrap_angle(
        state.heading + (state.speed / cfg.wheelbase_m) * math.tan(steer) * dt
    )
    target = throttle * cfg.max_speed_mps
    dv = min(max(target - state.speed, -cfg.max_accel_mps2 * dt), cfg.max_accel_mps2 * dt)
    speed = min(max(state.speed + dv, 0.0), cfg.max_speed_mps)
    return replace(state, x=x, y=y, heading=heading, speed=speed, steer_angle=steer)


def collision_check(state: RoverState, fmap: FieldMap, rover_radius_m: float) -> bool:
    """True iff the rover disc strictly intersects an obstacle or leaves the field.

    Touching at exactly the radius is not a collision.
    """
    if rover_radius_m <= 0:
        raise InvalidParameter("rover_radius_m must be positive")
    if fmap.boundary_distance(state.x, state.y) < rover_radius_m:
        return True
    for obs in fmap.obstacles:
        if obs.distance_to_point(state.x, state.y) < rover_radius_m:
            return True
    return False


def clearance(state: RoverState, fmap: FieldMap, rover_radius_m: float = 0.0) -> float:
    """Smallest margin between the rover disc and any obstacle or field edge."""
    d = min(fmap.boundary_distance(state.x, state.y), fmap.obstacle_distance(state.x, state.y))
    return d - rover_radius_m


_WORLD_KEYS = {"width_m", "height_m", "origin_geo", "obstacles"}
_RECT_KEYS = {"kind", "x", "y", "w", "h"}
_CIRCLE_KEYS = {"kind", "x", "y", "r"}


def parse_world(doc: dict) -> FieldMap:
    """Build a FieldMap from a world document; unknown fields are rejected."""
    if not isinstance(doc, dict):
        raise WorldFileError("world document must be a JSON object")
    unknown = set(doc) - _WORLD_KEYS
    if unknown:
        raise WorldFileError(f"unknown world fields: {sorted(unknown)}")
    try:
        width = float(doc["width_m"])
        height = float(doc["height_m"])
    except KeyError as exc:
        raise WorldFileError(f"missing world field: {exc}") from exc
    anchor = None
    if doc.get("origin_geo") is not None:
        geo = doc["origin_geo"]
        if set(geo) != {"lat_deg", "lon_deg"}:
            raise WorldFileError("origin_geo must have exactly lat_deg and lon_deg")
        anchor = GeoAnchor(float(geo["lat_deg"]), float(geo["lon_deg"]))
    obstacles: list[Obstacle] = []
    for i, entry in enumerate(doc.get("obstacles", [])):
        kind = entry.get("kind")
        if kind == "rect":
            if set(entry) - _RECT_KEYS:
                raise WorldFileError(f"obstacle {i}: unknown fields {sorted(set(entry) - _RECT_KEYS)}")
            obstacles.append(
                RectObstacle(float(entry["x"]), float(entry["y"]), float(entry["w"]), float(entry["h"]))
            )
        elif kind == "circle":
            if set(entry) - _CIRCLE_KEYS:
                raise WorldFileError(f"obstacle {i}: unknown fields {sorted(set(entry) - _CIRCLE_KEYS)}")
            obstacles.append(CircleObstacle(float(entry["x"]), float(entry["y"]), float(entry["r"])))
        else:
            raise WorldFileError(f"obstacle {i}: unknown kind {kind!r}")
    return FieldMap(width, height, tuple(obstacles), anchor)


def world_to_dict(fmap: FieldMap) -> dict:
    doc: dict = {"width_m": fmap.width_m, "height_m": fmap.height_m}
    if fmap.origin_geo is not None:
        doc["origin_geo"] = {
            "lat_deg": fmap.origin_geo.lat_deg,
            "lon_deg": fmap.origin_geo.lon_deg,
        }
    doc["obstacles"] = [
        {"kind": "rect", "x": o.x, "y": o.y, "w": o.w, "h": o.h}
        if isinstance(o, RectObstacle)
        else {"kind": "circle", "x": o.x, "y": o.y, "r": o.r}
        for o in fmap.obstacles
    ]
    return doc


def load_world(path) -> FieldMap:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise WorldFileError(f"{path}: invalid JSON: {exc}") from exc
    return parse_world(doc)
