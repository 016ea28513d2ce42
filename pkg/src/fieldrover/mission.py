"""Pre-arm verification, arming, mission execution, geotagged capture.

The executive owns all mutable mission state and runs on a single thread;
external commands are applied by the caller between ticks. Per tick it
reads sensors, runs the avoidance layer over the current route target,
steers, integrates kinematics, and completes waypoints when the estimated
position enters the acceptance radius. Flagged waypoints emit a capture
event (the simulated camera trigger) paired with exactly one geotag record
and one green-LED tick.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, replace

from . import nav, sensors, world
from .errors import (
    ArmRefused,
    InvalidParameter,
    InvalidTransition,
    MissionError,
    NoPath,
    RecordRejected,
    WorldFileError,
)
from .seeds import stream_rng
from .sensors import FixType, GpsChannel, GpsConfig, GpsFix, LidarConfig, RtkFilter
from .world import FieldMap, GeoAnchor, KinematicsConfig, RoverState


class MissionState(str, enum.Enum):
    DISARMED = "DISARMED"
    ARMED = "ARMED"
    MISSION_RUNNING = "MISSION_RUNNING"
    HOLD = "HOLD"
    MISSION_COMPLETE = "MISSION_COMPLETE"


class LedState(str, enum.Enum):
    RED_BOOTING = "RED_BOOTING"
    YELLOW_READY = "YELLOW_READY"
    GREEN_CAPTURING = "GREEN_CAPTURING"


ALLOWED_TRANSITIONS: frozenset[tuple[MissionState, MissionState]] = frozenset(
    {
        (MissionState.DISARMED, MissionState.ARMED),
        (MissionState.ARMED, MissionState.MISSION_RUNNING),
        (MissionState.MISSION_RUNNING, MissionState.HOLD),
        (MissionState.HOLD, MissionState.MISSION_RUNNING),
        (MissionState.MISSION_RUNNING, MissionState.MISSION_COMPLETE),
        (MissionState.MISSION_COMPLETE, MissionState.DISARMED),
    }
)


def validate_transition(current: MissionState, new: MissionState) -> None:
    if (current, new) not in ALLOWED_TRANSITIONS:
        raise InvalidTransition(f"{current.value} -> {new.value} is not allowed")


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    speed: float = 2.0
    acceptance_radius: float = 2.0
    trigger_camera: bool = False


@dataclass(frozen=True)
class MissionPlan:
    waypoints: tuple[Waypoint, ...]

    def __post_init__(self):
        if len(self.waypoints) < 1:
            raise InvalidParameter("mission needs at least one waypoint")
        for i, wp in enumerate(self.waypoints):
            if wp.acceptance_radius <= 0:
                raise InvalidParameter(f"waypoint {i}: acceptance_radius must be positive")
            if wp.speed <= 0:
                raise InvalidParameter(f"waypoint {i}: speed must be positive")

    def validate_limits(self, kinematics: KinematicsConfig, fmap: FieldMap | None = None) -> None:
        for i, wp in enumerate(self.waypoints):
            if wp.speed > kinematics.max_speed_mps:
                raise MissionError(f"waypoint {i}: speed {wp.speed} exceeds rover limit")
            if fmap is not None and not (0 <= wp.x <= fmap.width_m and 0 <= wp.y <= fmap.height_m):
                raise MissionError(f"waypoint {i}: outside field bounds")


_MISSION_KEYS = {"frame", "waypoints"}
_WP_LOCAL_KEYS = {"x", "y", "speed", "acceptance_radius", "trigger_camera"}
_WP_GEO_KEYS = {"lat", "lon", "speed", "acceptance_radius", "trigger_camera"}


def parse_mission(doc: dict, anchor: GeoAnchor | None = None) -> MissionPlan:
    """Build a MissionPlan from a mission document; unknown fields rejected."""
    if not isinstance(doc, dict):
        raise WorldFileError("mission document must be a JSON object")
    unknown = set(doc) - _MISSION_KEYS
    if unknown:
        raise WorldFileError(f"unknown mission fields: {sorted(unknown)}")
    frame = doc.get("frame", "local")
    if frame not in ("local", "geo"):
        raise WorldFileError(f"unknown mission frame {frame!r}")
    if frame == "geo" and anchor is None:
        raise WorldFileError("geo mission requires a geo-anchored world")
    wps = []
    for i, entry in enumerate(doc.get("waypoints", [])):
        allowed = _WP_LOCAL_KEYS if frame == "local" else _WP_GEO_KEYS
        unknown = set(entry) - allowed
        if unknown:
            raise WorldFileError(f"waypoint {i}: unknown fields {sorted(unknown)}")
        try:
            if frame == "local":
                x, y = float(entry["x"]), float(entry["y"])
            else:
                x, y = anchor.to_local(float(entry["lat"]), float(entry["lon"]))
        except KeyError as exc:
            raise WorldFileError(f"waypoint {i}: missing field {exc}") from exc
        wps.append(
            Waypoint(
                x=x,
                y=y,
                speed=float(entry.get("speed", 2.0)),
                acceptance_radius=float(entry.get("acceptance_radius", 2.0)),
                trigger_camera=bool(entry.get("trigger_camera", False)),
            )
        )
    return MissionPlan(tuple(wps))


def load_mission(path, anchor: GeoAnchor | None = None) -> MissionPlan:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise WorldFileError(f"{path}: invalid JSON: {exc}") from exc
    return parse_mission(doc, anchor)


# pre-arm checklist -----------------------------------------------------------

CHECK_NAMES = (
    "accel_calibrated",
    "gyro_calibrated",
    "compass_calibrated",
    "ahrs_ok",
    "gps_status",
    "rc_signal_ok",
    "throttle_neutral",
    "failsafe_configured",
    "battery_v_ok",
    "ekf_health_ok",
    "vibration_ok",
    "internal_hw_ok",
    "logging_ok",
    "tuning_ok",
)


@dataclass(frozen=True)
class HealthInputs:
    """Injected health scalars; these make the checklist executable."""

    accel_calibrated: bool = True
    gyro_calibrated: bool = True
    compass_calibrated: bool = True
    ahrs_ok: bool = True
    gps_fix: FixType = FixType.GPS_3D
    rc_signal: bool = True
    throttle: float = 0.0
    failsafe_configured: bool = True
    battery_v: float = 16.8
    ekf_health: float = 1.0
    vibration: float = 5.0
    internal_hw_ok: bool = True
    logging_ok: bool = True
    tuning_ok: bool = True


@dataclass(frozen=True)
class PreArmThresholds:
    min_cell_v: float = 3.5
    battery_cells: int = 4
    min_fix: FixType = FixType.GPS_3D
    throttle_deadband: float = 0.05
    min_ekf_health: float = 0.5
    max_vibration: float = 30.0

    @property
    def min_battery_v(self) -> float:
        return self.min_cell_v * self.battery_cells


DEFAULT_PREARM = PreArmThresholds()


@dataclass(frozen=True)
class PreArmReport:
    checks: dict[str, bool]

    @property
    def armable(self) -> bool:
        return all(self.checks.values())

    @property
    def failures(self) -> list[str]:
        return [name for name, ok in self.checks.items() if not ok]


def run_prearm(health: HealthInputs, thresholds: PreArmThresholds = DEFAULT_PREARM) -> PreArmReport:
    """Evaluate every check; all failures are reported, none stops the scan."""
    t = thresholds
    checks = {
        "accel_calibrated": health.accel_calibrated,
        "gyro_calibrated": health.gyro_calibrated,
        "compass_calibrated": health.compass_calibrated,
        "ahrs_ok": health.ahrs_ok,
        "gps_status": health.gps_fix.quality >= t.min_fix.quality,
        "rc_signal_ok": health.rc_signal,
        "throttle_neutral": abs(health.throttle) <= t.throttle_deadband,
        "failsafe_configured": health.failsafe_configured,
        "battery_v_ok": health.battery_v >= t.min_battery_v,
        "ekf_health_ok": health.ekf_health >= t.min_ekf_health,
        "vibration_ok": health.vibration <= t.max_vibration,
        "internal_hw_ok": health.internal_hw_ok,
        "logging_ok": health.logging_ok,
        "tuning_ok": health.tuning_ok,
    }
    return PreArmReport(checks=checks)


# geotag records --------------------------------------------------------------


@dataclass(frozen=True)
class GeotagRecord:
    image_id: str
    t: float
    fix: GpsFix
    waypoint_index: int


@dataclass(frozen=True)
class MissionEvent:
    t: float
    kind: str  # WAYPOINT_REACHED | CAPTURE | STATE | FAILSAFE
    data: dict


_CSV_LOCAL_HEADER = ["image_id", "t", "x", "y", "fix_type", "waypoint_index"]
_CSV_GEO_HEADER = ["image_id", "t", "lat", "lon", "fix_type", "waypoint_index"]


def _check_record(rec: GeotagRecord) -> None:
    if rec.fix.fix_type == FixType.NONE or rec.fix.est_x is None or rec.fix.est_y is None:
        raise RecordRejected(f"record {rec.image_id}: no position fix")


def export_geotags(
    records: list[GeotagRecord], fmt: str = "csv", anchor: GeoAnchor | None = None
) -> str:
    """Serialize capture records to CSV or a GeoJSON FeatureCollection.

    With a geo anchor, coordinates are exported as lat/lon; otherwise as
    local x/y meters. Floats use shortest-repr formatting so local-frame
    exports round-trip losslessly.
    """
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CSV_GEO_HEADER if anchor else _CSV_LOCAL_HEADER)
        for rec in records:
            _check_record(rec)
            if anchor:
                a, b = anchor.to_geo(rec.fix.est_x, rec.fix.est_y)
            else:
                a, b = rec.fix.est_x, rec.fix.est_y
            writer.writerow(
                [rec.image_id, repr(rec.t), repr(a), repr(b), rec.fix.fix_type.value, rec.waypoint_index]
            )
        return buf.getvalue()
    if fmt == "geojson":
        features = []
        for rec in records:
            _check_record(rec)
            if anchor:
                lat, lon = anchor.to_geo(rec.fix.est_x, rec.fix.est_y)
                coords = [lon, lat]
            else:
                coords = [rec.fix.est_x, rec.fix.est_y]
            features.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": coords},
                    "properties": {
                        "image_id": rec.image_id,
                        "t": rec.t,
                        "fix_type": rec.fix.fix_type.value,
                        "waypoint_index": rec.waypoint_index,
                    },
                }
            )
        return json.dumps({"type": "FeatureCollection", "features": features}, indent=2) + "\n"
    raise InvalidParameter(f"unknown geotag format {fmt!r}")


def parse_geotags(
    text: str,
    fmt: str = "csv",
    anchor: GeoAnchor | None = None,
    gps_cfg: GpsConfig = sensors.DEFAULT_GPS,
) -> list[GeotagRecord]:
    """Inverse of export_geotags; sigma is restored from the fix regime."""

    def rebuild(image_id, t, a, b, fix_type, wp_index):
        mode = FixType(fix_type)
        if anchor:
            x, y = anchor.to_local(a, b)
        else:
            x, y = a, b
        fix = GpsFix(est_x=x, est_y=y, fix_type=mode, horizontal_sigma_m=gps_cfg.sigma_for(mode))
        return GeotagRecord(image_id=image_id, t=t, fix=fix, waypoint_index=wp_index)

    records = []
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header not in (_CSV_LOCAL_HEADER, _CSV_GEO_HEADER):
            raise WorldFileError(f"unexpected geotag CSV header: {header}")
        for row in reader:
            records.append(
                rebuild(row[0], float(row[1]), float(row[2]), float(row[3]), row[4], int(row[5]))
            )
        return records
    if fmt == "geojson":
        doc = json.loads(text)
        for feat in doc.get("features", []):
            props = feat["properties"]
            cx, cy = feat["geometry"]["coordinates"]
            if anchor:
                a, b = cy, cx  # stored as [lon, lat]
            else:
                a, b = cx, cy
            records.append(
                rebuild(
                    props["image_id"], props["t"], a, b, props["fix_type"], props["waypoint_index"]
                )
            )
        return records
    raise InvalidParameter(f"unknown geotag format {fmt!r}")


# mission executive ------------------------------------------------------------


@dataclass(frozen=True)
class ExecutiveConfig:
    dt_s: float = 0.05
    rover_radius_m: float = 0.4
    cell_size_m: float = 0.5
    replan_offpath_cells: float = 2.0
    approach_speed_gain: float = 1.5  # caps speed to gain * (nearest return - margin)
    failsafe_timeout_s: float = 2.0
    min_battery_v: float = 14.0
    override_timeout_s: float = 0.5
    correction_interval_s: float = 1.0
    base_station: tuple[float, float] = (0.0, 0.0)


DEFAULT_EXECUTIVE = ExecutiveConfig()


class MissionExecutive:
    """Single-owner mission state machine and control loop.

    world_map is ground truth (rangefinder and collision checks see it);
    plan_map is what the global planner knows and defaults to world_map.
    Obstacles present only in world_map model surprises the avoidance layer
    must handle on its own.
    """

    def __init__(
        self,
        world_map: FieldMap,
        *,
        plan_map: FieldMap | None = None,
        seed: int = 0,
        start: tuple[float, float, float] = (1.0, 1.0, 0.0),
        kinematics: KinematicsConfig = world.DEFAULT_KINEMATICS,
        lidar: LidarConfig = sensors.DEFAULT_LIDAR,
        gps: GpsConfig = sensors.DEFAULT_GPS,
        avoidance: nav.AvoidanceConfig = nav.DEFAULT_AVOIDANCE,
        cfg: ExecutiveConfig = DEFAULT_EXECUTIVE,
        health: HealthInputs = HealthInputs(),
        prearm_thresholds: PreArmThresholds = DEFAULT_PREARM,
        rtk_enabled: bool = False,
    ):
        self.world_map = world_map
        self.plan_map = plan_map if plan_map is not None else world_map
        self.kinematics = kinematics
        self.lidar = lidar
        self.gps_cfg = gps
        self.avoidance = avoidance
        self.cfg = cfg
        self.health = health
        self.prearm_thresholds = prearm_thresholds
        self.rtk_enabled = rtk_enabled

        self.rover = RoverState(
            x=start[0], y=start[1], heading=start[2], battery_v=health.battery_v,
            vibration=health.vibration,
        )
        self.t = 0.0
        self.state = MissionState.DISARMED
        self.led = LedState.RED_BOOTING
        self.plan: MissionPlan | None = None
        self.wp_index = 0

        # fused planning grid: static rasterization plus scan-observed cells
        self.grid = world.rasterize(self.plan_map, cfg.cell_size_m, cfg.rover_radius_m)
        self._seen_cells: set[tuple[int, int]] = set()
        self._route: list[tuple[int, int]] | None = None
        self._route_cursor = 0

        self._lidar_rng = stream_rng(seed, "lidar")
        self.gps_channel = GpsChannel(gps, stream_rng(seed, "gps"))
        self.rtk = RtkFilter(gps)
        self._last_corr_t = -math.inf
        self.last_fix: GpsFix | None = None
        self.last_scan: sensors.LidarScan | None = None
        self.last_decision: nav.AvoidanceDecision | None = None
        self.last_target: tuple[float, float] | None = None
        self.last_avoid_cfg: nav.AvoidanceConfig = avoidance
        self.last_nav_state: RoverState | None = None
        self.corrections: list[sensors.RtkCorrection] = []

        self._last_rc_t = 0.0
        self._override: tuple[float, float, float] | None = None  # throttle, steer, t
        self.geotags: list[GeotagRecord] = []
        self.event_log: list[MissionEvent] = []
        self._image_counter = 0
        self.min_true_clearance_m = math.inf
        self.collided = False

    # -- state machine -----------------------------------------------------

    def _transition(self, new: MissionState, reason: str | None = None) -> MissionEvent:
        validate_transition(self.state, new)
        old = self.state
        self.state = new
        data = {"from": old.value, "to": new.value}
        if reason:
            data["reason"] = reason
        return MissionEvent(t=self.t, kind="STATE", data=data)

    def run_prearm(self) -> PreArmReport:
        return run_prearm(self.health, self.prearm_thresholds)

    def arm(self, report: PreArmReport | None = None) -> None:
        if self.state == MissionState.ARMED:
            return  # arming twice is a no-op
        if report is None:
            report = self.run_prearm()
        if not report.armable:
            raise ArmRefused(report.failures)
        self.event_log.append(self._transition(MissionState.ARMED))
        self.led = LedState.YELLOW_READY

    def upload_mission(self, plan: MissionPlan) -> None:
        if self.state == MissionState.MISSION_RUNNING:
            raise MissionError("cannot upload while a mission is running")
        plan.validate_limits(self.kinematics, self.plan_map)
        self.plan = plan
        self.wp_index = 0
        self._route = None

    def start_mission(self) -> None:
        if self.plan is None:
            raise MissionError("no mission uploaded")
        self.event_log.append(self._transition(MissionState.MISSION_RUNNING))

    def request_hold(self, reason: str = "operator") -> None:
        self.event_log.append(self._transition(MissionState.HOLD, reason))

    def resume(self) -> None:
        self.event_log.append(self._transition(MissionState.MISSION_RUNNING, "resume"))

    def request_disarm(self) -> None:
        # disarming mid-mission is treated as a hold: the vehicle stops and
        # waits rather than cutting out while moving
        if self.state == MissionState.MISSION_RUNNING:
            self.request_hold("disarm requested")
            return
        self.event_log.append(self._transition(MissionState.DISARMED))
        self.led = LedState.RED_BOOTING

    def rc_heartbeat(self) -> None:
        self._last_rc_t = self.t

    def set_override(self, throttle: float, steer: float) -> None:
        throttle = min(max(throttle, -1.0), 1.0)
        steer = min(max(steer, -1.0), 1.0)
        self._override = (throttle, steer, self.t)

    # -- sensing -----------------------------------------------------------

    def _measure_fix(self) -> GpsFix:
        if self.rtk_enabled:
            if self.t - self._last_corr_t >= self.cfg.correction_interval_s:
                bx, by = self.cfg.base_station
                measured = self.gps_channel.measure_base(bx, by)
                corr = sensors.base_station_correction((bx, by), measured, self.t)
                self.rtk.observe(corr)
                self.corrections.append(corr)
                self._last_corr_t = self.t
            mode = self.rtk.regime(self.t)
            raw = self.gps_channel.measure(self.rover, mode)
            return self.rtk.correct(raw, self.t)
        return self.gps_channel.measure(self.rover, FixType.GPS_3D)

    def _scan(self) -> sensors.LidarScan:
        s = sensors.scan(
            self.rover,
            self.world_map,
            fov=self.lidar.fov_rad,
            n_beams=self.lidar.n_beams,
            max_range=self.lidar.max_range_m,
            rng=self._lidar_rng,
            noise_sigma=self.lidar.noise_sigma_m,
        )
        return replace(s, timestamp=self.t)

    # -- routing -----------------------------------------------------------

    def _fuse_scan(self, nav_state: RoverState, scan: sensors.LidarScan) -> None:
        """Mark planning cells around scan returns as occupied.

        Surprise obstacles the static map does not know about become part of
        the planning picture, so the global route detours instead of leaving
        the reactive layer to fight them forever. Mapping needs precise
        localization, so returns are only fused under an RTK fix (or when the
        configured accuracy regime makes standard GPS exact).
        """
        if self.last_fix is not None and self.last_fix.fix_type == FixType.GPS_3D:
            if self.gps_cfg.sigma_gps3d_m > 0.05 or self.gps_cfg.bias_sigma_m > 0:
                return
        cs = self.cfg.cell_size_m
        inflate = max(self.cfg.rover_radius_m, self.avoidance.margin_m)
        route_cells = set(self._route or ())
        route_hit = False
        for px, py in nav.scan_points(nav_state, scan):
            c0 = max(int((px - inflate) / cs), 0)
            c1 = min(int((px + inflate) / cs), self.grid.cols - 1)
            r0 = max(int((py - inflate) / cs), 0)
            r1 = min(int((py + inflate) / cs), self.grid.rows - 1)
            for row in range(r0, r1 + 1):
                for col in range(c0, c1 + 1):
                    if (row, col) in self._seen_cells:
                        continue
                    dx = max(col * cs - px, px - (col + 1) * cs, 0.0)
                    dy = max(row * cs - py, py - (row + 1) * cs, 0.0)
                    if dx * dx + dy * dy < inflate * inflate:
                        self._seen_cells.add((row, col))
                        if self.grid.cells[row, col] == world.FREE:
                            self.grid.cells[row, col] = world.OCCUPIED
                            if (row, col) in route_cells:
                                route_hit = True
        if route_hit:
            self._route = None

    def _nearest_free_cell(self, cell: tuple[int, int]) -> tuple[int, int] | None:
        if self.grid.is_free(*cell):
            return cell
        best = None
        for radius in range(1, max(self.grid.rows, self.grid.cols)):
            candidates = []
            for dr in range(-radius, radius + 1):
                for dc in range(-radius, radius + 1):
                    if max(abs(dr), abs(dc)) != radius:
                        continue
                    rc = (cell[0] + dr, cell[1] + dc)
                    if self.grid.is_free(*rc):
                        candidates.append(rc)
            if candidates:
                best = min(candidates)  # deterministic: lowest row, then column
                break
        return best

    def _plan_route(self, fix: GpsFix, wp: Waypoint) -> bool:
        start = self._nearest_free_cell(self.grid.cell_of(fix.est_x, fix.est_y))
        goal = self._nearest_free_cell(self.grid.cell_of(wp.x, wp.y))
        if start is None or goal is None:
            return False
        try:
            path = nav.dijkstra_plan(self.grid, start, goal)
        except NoPath:
            return False
        self._route = list(path.cells)
        self._route_cursor = 0
        return True

    def _grid_los(self, x0: float, y0: float, x1: float, y1: float) -> bool:
        """Straight segment crosses only FREE cells (sampled at half-cell steps)."""
        length = math.hypot(x1 - x0, y1 - y0)
        steps = max(1, int(length / (self.grid.cell_size_m * 0.5)))
        for i in range(steps + 1):
            f = i / steps
            cell = self.grid.cell_of(x0 + f * (x1 - x0), y0 + f * (y1 - y0))
            if not self.grid.is_free(*cell):
                return False
        return True

    def _route_target(self, fix: GpsFix, wp: Waypoint) -> tuple[float, float] | None:
        if self._route is None and not self._plan_route(fix, wp):
            return None
        # off-route check against the whole route; the avoidance layer may
        # legitimately drag us sideways, in which case we replan from here
        centers = [self.grid.center_of(c) for c in self._route]
        off = min(math.hypot(fix.est_x - px, fix.est_y - py) for px, py in centers)
        if off > self.cfg.replan_offpath_cells * self.cfg.cell_size_m:
            if not self._plan_route(fix, wp):
                return None
            centers = [self.grid.center_of(c) for c in self._route]
        # pure pursuit: chase the furthest consecutive route point that is
        # within pursuit range and visible through free cells only, so the
        # target can never be a passed-by cell or sit across a wall
        pursuit = self.avoidance.lookahead_m
        while self._route_cursor + 1 < len(centers):
            nx, ny = centers[self._route_cursor + 1]
            if math.hypot(fix.est_x - nx, fix.est_y - ny) > pursuit:
                break
            if not self._grid_los(fix.est_x, fix.est_y, nx, ny):
                break
            self._route_cursor += 1
        if self._route_cursor >= len(centers) - 1:
            lx, ly = centers[-1]
            if math.hypot(fix.est_x - lx, fix.est_y - ly) <= pursuit:
                return (wp.x, wp.y)
        return centers[self._route_cursor]

    # -- main loop ----------------------------------------------------------

    def tick(self, dt: float | None = None) -> list[MissionEvent]:
        """Advance one control cycle and return the events it produced."""
        dt = self.cfg.dt_s if dt is None else dt
        self.t += dt
        events: list[MissionEvent] = []
        self.led = (
            LedState.RED_BOOTING if self.state == MissionState.DISARMED else LedState.YELLOW_READY
        )

        self.gps_channel.advance(dt)
        fix = self._measure_fix()
        self.last_fix = fix

        if self.state == MissionState.MISSION_RUNNING:
            if self.t - self._last_rc_t > self.cfg.failsafe_timeout_s:
                events.append(self._transition(MissionState.HOLD, "rc_loss"))
                events.append(MissionEvent(self.t, "FAILSAFE", {"reason": "rc_loss"}))
            elif self.rover.battery_v < self.cfg.min_battery_v:
                events.append(self._transition(MissionState.HOLD, "battery_low"))
                events.append(MissionEvent(self.t, "FAILSAFE", {"reason": "battery_low"}))

        if self.state != MissionState.MISSION_RUNNING:
            # commanded speed is zero every tick outside MISSION_RUNNING
            self.rover = replace(self.rover, speed=0.0, steer_angle=0.0)
            self.event_log.extend(events)
            return events

        # waypoint acceptance against the estimated position, before moving
        while self.state == MissionState.MISSION_RUNNING and self.wp_index < len(self.plan.waypoints):
            wp = self.plan.waypoints[self.wp_index]
            if math.hypot(fix.est_x - wp.x, fix.est_y - wp.y) > wp.acceptance_radius:
                break
            events.append(
                MissionEvent(self.t, "WAYPOINT_REACHED", {"index": self.wp_index})
            )
            if wp.trigger_camera:
                self._image_counter += 1
                image_id = f"img_{self._image_counter:04d}"
                record = GeotagRecord(
                    image_id=image_id, t=self.t, fix=fix, waypoint_index=self.wp_index
                )
                self.geotags.append(record)
                self.led = LedState.GREEN_CAPTURING
                events.append(
                    MissionEvent(
                        self.t,
                        "CAPTURE",
                        {"image_id": image_id, "waypoint_index": self.wp_index},
                    )
                )
            self.wp_index += 1
            self._route = None
            if self.wp_index == len(self.plan.waypoints):
                events.append(self._transition(MissionState.MISSION_COMPLETE))
                self.rover = replace(self.rover, speed=0.0, steer_angle=0.0)
                self.event_log.extend(events)
                return events

        wp = self.plan.waypoints[self.wp_index]
        scan = self._scan()
        self.last_scan = scan
        self._fuse_scan(replace(self.rover, x=fix.est_x, y=fix.est_y), scan)

        target = self._route_target(fix, wp)
        if target is None:
            events.append(self._transition(MissionState.HOLD, "no_path"))
            events.append(MissionEvent(self.t, "FAILSAFE", {"reason": "no_path"}))
            self.rover = replace(self.rover, speed=0.0, steer_angle=0.0)
            self.event_log.extend(events)
            return events
        self.last_target = target

        nav_state = replace(self.rover, x=fix.est_x, y=fix.est_y)
        self.last_nav_state = nav_state
        # probe no further than the target itself: route cells sit in free
        # space by construction, and probing past a near target would see
        # whatever lies behind it and stall the rover
        dist_target = math.hypot(fix.est_x - target[0], fix.est_y - target[1])
        avoid_cfg = replace(
            self.avoidance,
            lookahead_m=max(min(self.avoidance.lookahead_m, dist_target), 0.1),
        )
        self.last_avoid_cfg = avoid_cfg
        decision = nav.bendyruler_step(nav_state, target, scan, avoid_cfg)
        self.last_decision = decision
        speed_cmd = wp.speed if decision.clear else 0.0
        if decision.clear:
            # slow down near anything the scanner sees, so the stopping
            # distance never exceeds the avoidance margin and the rover can
            # not coast into the margin shell where every corridor is blocked
            ranges = [r for _, r in scan.beams if r is not None]
            if ranges:
                ceiling = self.cfg.approach_speed_gain * (min(ranges) - self.avoidance.margin_m)
                speed_cmd = min(speed_cmd, max(ceiling, 0.0))
        throttle, steer = nav.steer_to_bearing(
            self.rover, decision.chosen_bearing, speed_cmd, self.kinematics
        )

        if self._override is not None:
            o_thr, o_steer, o_t = self._override
            if self.t - o_t <= self.cfg.override_timeout_s:
                throttle = max(o_thr, 0.0)
                steer = o_steer * self.kinematics.max_steer_rad
            else:
                self._override = None  # dead-man expired; mission resumes control

        self.rover = world.step_kinematics(self.rover, throttle, steer, dt, self.kinematics)
        c = world.clearance(self.rover, self.world_map, self.cfg.rover_radius_m)
        self.min_true_clearance_m = min(self.min_true_clearance_m, c)
        if world.collision_check(self.rover, self.world_map, self.cfg.rover_radius_m):
            self.collided = True

        self.event_log.extend(events)
        return events

    @property
    def distance_to_waypoint(self) -> float:
        if (
            self.plan is None
            or self.wp_index >= len(self.plan.waypoints)
            or self.last_fix is None
            or self.last_fix.est_x is None
        ):
            return 0.0
        wp = self.plan.waypoints[self.wp_index]
        return math.hypot(self.last_fix.est_x - wp.x, self.last_fix.est_y - wp.y)
