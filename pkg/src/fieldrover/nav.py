"""Global grid planning, reactive bearing-search avoidance, steering control.

The planner finds minimum-cost 8-connected paths over the occupancy grid.
The avoidance layer probes candidate bearings around the direct-to-target
bearing against the latest rangefinder sweep and picks the least-deviating
clear one; the division of labor is global route from the static map,
local reaction from live returns.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

from .errors import InvalidEndpoint, InvalidParameter, NoPath
from .sensors import LidarScan
from .world import (
    DEFAULT_KINEMATICS,
    KinematicsConfig,
    OccupancyGrid,
    RoverState,
    wrap_angle,
)

Cell = tuple[int, int]

# neighbor offsets (drow, dcol) with unit step costs; explored in fixed order
_NEIGHBORS = (
    (-1, 0, 1.0),
    (1, 0, 1.0),
    (0, -1, 1.0),
    (0, 1, 1.0),
    (-1, -1, math.sqrt(2.0)),
    (-1, 1, math.sqrt(2.0)),
    (1, -1, math.sqrt(2.0)),
    (1, 1, math.sqrt(2.0)),
)


@dataclass(frozen=True)
class GridPath:
    cells: tuple[Cell, ...]
    cost: float


def dijkstra_plan(grid: OccupancyGrid, start: Cell, goal: Cell) -> GridPath:
    """Minimum-cost 8-connected path from start to goal over FREE cells.

    Step costs are cell_size_m orthogonally and sqrt(2) * cell_size_m
    diagonally. Ties in the frontier break on lower row, then lower column,
    so results are exactly reproducible.
    """
    for name, cell in (("start", start), ("goal", goal)):
        if not grid.in_bounds(*cell):
            raise InvalidEndpoint(f"{name} cell {cell} outside grid")
        if not grid.is_free(*cell):
            raise InvalidEndpoint(f"{name} cell {cell} is occupied")
    if start == goal:
        return GridPath(cells=(start,), cost=0.0)

    dist: dict[Cell, float] = {start: 0.0}
    pred: dict[Cell, Cell] = {}
    done: set[Cell] = set()
    frontier: list[tuple[float, int, int]] = [(0.0, start[0], start[1])]
    while frontier:
        d, row, col = heapq.heappop(frontier)
        cell = (row, col)
        if cell in done:
            continue
        done.add(cell)
        if cell == goal:
            path = [cell]
            while path[-1] != start:
                path.append(pred[path[-1]])
            path.reverse()
            return GridPath(cells=tuple(path), cost=d * grid.cell_size_m)
        for drow, dcol, step in _NEIGHBORS:
            nxt = (row + drow, col + dcol)
            if not grid.is_free(*nxt) or nxt in done:
                continue
            nd = d + step
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                pred[nxt] = cell
                heapq.heappush(frontier, (nd, nxt[0], nxt[1]))
    raise NoPath(f"no path from {start} to {goal}")


@dataclass(frozen=True)
class AvoidanceConfig:
    lookahead_m: float = 5.0
    margin_m: float = 0.8
    step_deg: float = 5.0
    max_deviation_deg: float = 80.0

    def __post_init__(self):
        for name in ("lookahead_m", "margin_m", "step_deg", "max_deviation_deg"):
            if getattr(self, name) <= 0:
                raise InvalidParameter(f"{name} must be positive")


DEFAULT_AVOIDANCE = AvoidanceConfig()


@dataclass(frozen=True)
class AvoidanceDecision:
    chosen_bearing: float  # world frame, [-pi, pi)
    clear: bool
    deviation: float  # signed radians from the direct target bearing


def candidate_deviations(cfg: AvoidanceConfig) -> list[float]:
    """Deviations in preference order: 0, then each step right, then left."""
    step = math.radians(cfg.step_deg)
    max_dev = math.radians(cfg.max_deviation_deg)
    out = [0.0]
    k = 1
    while k * step <= max_dev + 1e-12:
        out.append(-k * step)
        out.append(k * step)
        k += 1
    return out


def _point_segment_distance(px, py, ax, ay, bx, by) -> float:
    vx, vy = bx - ax, by - ay
    wx, wy = px - ax, py - ay
    seg_len2 = vx * vx + vy * vy
    if seg_len2 <= 0.0:
        return math.hypot(wx, wy)
    t = min(max((wx * vx + wy * vy) / seg_len2, 0.0), 1.0)
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


def corridor_clear(
    x: float,
    y: float,
    bearing: float,
    points: list[tuple[float, float]],
    lookahead_m: float,
    margin_m: float,
) -> bool:
    """True when no obstacle point lies within margin of the probe segment."""
    bx = x + lookahead_m * math.cos(bearing)
    by = y + lookahead_m * math.sin(bearing)
    for px, py in points:
        if _point_segment_distance(px, py, x, y, bx, by) <= margin_m:
            return False
    return True


def scan_points(state: RoverState, scan: LidarScan) -> list[tuple[float, float]]:
    """Project scan returns into the world frame around the given pose."""
    pts = []
    for bearing, rng in scan.beams:
        if rng is None:
            continue
        a = state.heading + bearing
        pts.append((state.x + rng * math.cos(a), state.y + rng * math.sin(a)))
    return pts


def bendyruler_step(
    state: RoverState,
    target: tuple[float, float],
    scan: LidarScan,
    cfg: AvoidanceConfig = DEFAULT_AVOIDANCE,
) -> AvoidanceDecision:
    """Pick the least-deviating bearing whose probe corridor is clear.

    Candidates start at the direct-to-target bearing and widen by step_deg
    per side up to max_deviation_deg, right side first on equal deviation.
    A candidate is admissible when every scan return keeps more than
    margin_m from the lookahead probe segment. With no admissible candidate
    the decision reports clear=False; callers must command zero speed.
    A scan with no returns admits every candidate: a dead sensor is the
    mission failsafe's problem, not the avoidance layer's.
    """
    direct = math.atan2(target[1] - state.y, target[0] - state.x)
    points = scan_points(state, scan)
    for dev in candidate_deviations(cfg):
        bearing = direct + dev
        if corridor_clear(state.x, state.y, bearing, points, cfg.lookahead_m, cfg.margin_m):
            return AvoidanceDecision(chosen_bearing=wrap_angle(bearing), clear=True, deviation=dev)
    return AvoidanceDecision(chosen_bearing=wrap_angle(direct), clear=False, deviation=0.0)


@dataclass(frozen=True)
class SteerConfig:
    kp: float = 2.0


DEFAULT_STEER = SteerConfig()


def steer_to_bearing(
    state: RoverState,
    bearing: float,
    speed_cmd: float,
    kinematics: KinematicsConfig = DEFAULT_KINEMATICS,
    steer_cfg: SteerConfig = DEFAULT_STEER,
) -> tuple[float, float]:
    """Proportional heading controller; returns (throttle, steer).

    The heading error is taken in (-pi, pi], so a dead-astern target
    saturates the steer at +max_steer.
    """
    err = math.remainder(bearing - state.heading, math.tau)
    steer = min(max(steer_cfg.kp * err, -kinematics.max_steer_rad), kinematics.max_steer_rad)
    throttle = min(max(speed_cmd / kinematics.max_speed_mps, 0.0), 1.0)
    return throttle, steer
