"""Closed-loop mission driver: headless runs and the live service loop.

Headless runs advance the simulation as fast as possible and write the
telemetry log, geotag exports and a summary derived from the frame stream.
The service loop paces ticks against the wall clock, broadcasts frames at
the configured rate, and applies queued client commands at tick
boundaries. Observers never perturb the simulation: a run with clients
attached produces the same artifacts as one without.
"""

from __future__ import annotations

import json

import time
from dataclasses import dataclass, field
from pathlib import Path

from . import mission as mission_mod
from . import nav, sensors, telemetry, world
from .errors import InvalidTransition, MissionError, WorldFileError
from .mission import (
    HealthInputs,
    MissionExecutive,
    MissionPlan,
    MissionState,
    export_geotags,
    parse_mission,
)
from .telemetry import LineServer, TelemetryFrame, ack_line, build_frame, correction_line

TELEMETRY_RATE_HZ = 10.0


@dataclass
class RunConfig:
    world_path: str
    mission_path: str | None = None
    seed: int = 0
    out_dir: str | None = None
    host: str = "127.0.0.1"
    telemetry_port: int | None = None
    rtk_port: int | None = None
    rtk: bool = True
    realtime: bool = False
    max_sim_s: float = 600.0
    start: tuple[float, float, float] = (1.0, 1.0, 0.0)
    gps_sigma_m: float | None = None  # overrides the standard-GPS regime sigma
    battery_v: float | None = None
    noiseless: bool = False
    gps: sensors.GpsConfig | None = None
    lidar: sensors.LidarConfig | None = None
    avoidance: nav.AvoidanceConfig | None = None
    executive: mission_mod.ExecutiveConfig | None = None


@dataclass
class RunResult:
    exit_code: int
    reason: str
    frames: list[TelemetryFrame] = field(default_factory=list)
    summary: dict | None = None
    prearm_failures: list[str] = field(default_factory=list)
    executive: MissionExecutive | None = None


def build_executive(cfg: RunConfig) -> MissionExecutive:
    fmap = world.load_world(cfg.world_path)
    gps = cfg.gps
    if gps is None:
        gps = sensors.GpsConfig.noiseless() if cfg.noiseless else sensors.DEFAULT_GPS
    if cfg.gps_sigma_m is not None:
        from dataclasses import replace

        gps = replace(gps, sigma_gps3d_m=cfg.gps_sigma_m)
    lidar = cfg.lidar
    if lidar is None:
        lidar = (
            sensors.LidarConfig(noise_sigma_m=0.0) if cfg.noiseless else sensors.DEFAULT_LIDAR
        )
    health = HealthInputs(battery_v=cfg.battery_v) if cfg.battery_v is not None else HealthInputs()
    ex = MissionExecutive(
        fmap,
        seed=cfg.seed,
        start=cfg.start,
        gps=gps,
        lidar=lidar,
        avoidance=cfg.avoidance or nav.DEFAULT_AVOIDANCE,
        cfg=cfg.executive or mission_mod.DEFAULT_EXECUTIVE,
        health=health,
        rtk_enabled=cfg.rtk,
    )
    return ex


class MissionService:
    """Shared tick/frame/command machinery for run and serve modes."""

    def __init__(self, ex: MissionExecutive, server: LineServer | None = None,
                 rtk_server: LineServer | None = None):
        self.ex = ex
        self.server = server
        self.rtk_server = rtk_server
        self.frames: list[TelemetryFrame] = []
        self._frame_every = max(1, round(1.0 / (TELEMETRY_RATE_HZ * ex.cfg.dt_s)))
        self._tick_count = 0
        self._corr_sent = 0

    def apply_commands(self) -> None:
        if self.server is None:
            return
        for entry in self.server.drain_commands():
            accepted, reason = self._apply(entry)
            self.server.send_to(entry.client_id, ack_line(entry.seq, accepted, reason))

    def _apply(self, entry: telemetry.CommandEntry) -> tuple[bool, str | None]:
        if entry.error is not None:
            return False, entry.error
        ex = self.ex
        try:
            if entry.kind == "ARM":
                report = ex.run_prearm()
                if not report.armable:
                    return False, "prearm failed: " + ", ".join(report.failures)
                ex.arm(report)
                return True, None
            if entry.kind == "DISARM":
                ex.request_disarm()
                return True, None
            if entry.kind == "START_MISSION":
                ex.start_mission()
                return True, None
            if entry.kind == "SET_MODE":
                mode = entry.payload.get("mode")
                if mode == MissionState.HOLD.value:
                    ex.request_hold()
                elif mode == MissionState.MISSION_RUNNING.value:
                    ex.resume()
                else:
                    return False, f"unknown mode {mode!r}"
                return True, None
            if entry.kind == "UPLOAD_MISSION":
                try:
                    plan = parse_mission(entry.payload, ex.world_map.origin_geo)
                    ex.upload_mission(plan)
                except (WorldFileError, MissionError, ValueError) as exc:
                    return False, f"invalid mission: {exc}"
                return True, None
            if entry.kind == "MANUAL_OVERRIDE":
                try:
                    thr = float(entry.payload["throttle"])
                    steer = float(entry.payload["steer"])
                except (KeyError, TypeError, ValueError):
                    return False, "override payload needs throttle and steer"
                ex.set_override(thr, steer)
                return True, None
        except (MissionError, InvalidTransition) as exc:
            return False, str(exc)
        except Exception as exc:  # protocol must survive bad client input
            return False, str(exc)
        return False, "unknown command"

    def step(self, rc_alive: bool = True) -> list[mission_mod.MissionEvent]:
        self.apply_commands()
        if rc_alive:
            self.ex.rc_heartbeat()
        events = self.ex.tick()
        self._tick_count += 1
        emit = self._tick_count % self._frame_every == 0 or bool(events)
        if emit:
            last = None
            if events:
                captures = [e for e in events if e.kind == "CAPTURE"]
                ev = captures[0] if captures else events[-1]
                last = {"kind": ev.kind, **ev.data}
            frame = build_frame(self.ex, last)
            self.frames.append(frame)
            if self.server is not None:
                self.server.broadcast(frame.to_line())
        if self.rtk_server is not None:
            while self._corr_sent < len(self.ex.corrections):
                corr = self.ex.corrections[self._corr_sent]
                self.rtk_server.broadcast(correction_line(corr.t, corr.dx, corr.dy))
                self._corr_sent += 1
        return events


def _write_artifacts(
    out_dir: str, ex: MissionExecutive, frames: list[TelemetryFrame], seed: int
) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    telemetry.write_frame_log(out / "telemetry.ndjson", frames)
    anchor = ex.world_map.origin_geo
    (out / "geotags.csv").write_text(
        export_geotags(ex.geotags, "csv", anchor), encoding="utf-8"
    )
    (out / "geotags.geojson").write_text(
        export_geotags(ex.geotags, "geojson", anchor), encoding="utf-8"
    )
    summary = telemetry.summarize_frames(frames, ex.world_map, ex.cfg.rover_radius_m)
    summary["captures"] = len(ex.geotags)
    summary["seed"] = seed
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    return summary


def _probe_out_dir(out_dir: str | None) -> str | None:
    """Fail at startup, not after a long run, when artifacts cannot land."""
    if out_dir is None:
        return None
    try:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        probe = Path(out_dir) / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        return f"output directory not writable: {exc}"
    return None


def run_mission(cfg: RunConfig) -> RunResult:
    """Pre-arm, arm, execute to completion or HOLD; write artifacts."""
    ex = build_executive(cfg)
    if cfg.mission_path is None:
        return RunResult(exit_code=1, reason="no mission file")
    problem = _probe_out_dir(cfg.out_dir)
    if problem is not None:
        return RunResult(exit_code=2, reason=problem)
    plan = mission_mod.load_mission(cfg.mission_path, ex.world_map.origin_geo)

    report = ex.run_prearm()
    if not report.armable:
        return RunResult(exit_code=2, reason="prearm failed", prearm_failures=report.failures)
    ex.arm(report)
    ex.upload_mission(plan)
    ex.start_mission()

    server = rtk_server = None
    if cfg.telemetry_port is not None:
        server = LineServer(host=cfg.host, port=cfg.telemetry_port)
        server.start()
    if cfg.rtk_port is not None:
        rtk_server = LineServer(host=cfg.host, port=cfg.rtk_port, accept_commands=False)
        rtk_server.start()
    service = MissionService(ex, server, rtk_server)

    period = ex.cfg.dt_s
    next_tick = time.monotonic()
    try:
        while ex.t < cfg.max_sim_s:
            service.step()
            if ex.state == MissionState.MISSION_COMPLETE:
                break
            if ex.state == MissionState.HOLD and server is None:
                break  # nobody can resume a headless run
            if cfg.realtime:
                next_tick += period
                delay = next_tick - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
    finally:
        if server is not None:
            server.stop()
        if rtk_server is not None:
            rtk_server.stop()

    summary = None
    if cfg.out_dir is not None:
        summary = _write_artifacts(cfg.out_dir, ex, service.frames, cfg.seed)
    completed = ex.state == MissionState.MISSION_COMPLETE
    return RunResult(
        exit_code=0 if completed else 2,
        reason="mission complete" if completed else f"stopped in {ex.state.value}",
        frames=service.frames,
        summary=summary,
        executive=ex,
    )


def serve_forever(cfg: RunConfig, stop_event=None) -> RunResult:
    """Real-time paced service loop; clients drive the mission over the wire."""
    ex = build_executive(cfg)
    problem = _probe_out_dir(cfg.out_dir)
    if problem is not None:
        return RunResult(exit_code=2, reason=problem)
    if cfg.mission_path is not None:
        ex.upload_mission(mission_mod.load_mission(cfg.mission_path, ex.world_map.origin_geo))
    server = LineServer(host=cfg.host, port=cfg.telemetry_port or 0)
    server.start()
    rtk_server = None
    if cfg.rtk_port is not None:
        rtk_server = LineServer(host=cfg.host, port=cfg.rtk_port, accept_commands=False)
        rtk_server.start()
    service = MissionService(ex, server, rtk_server)
    print(f"telemetry on {server.host}:{server.port}", flush=True)
    if rtk_server is not None:
        print(f"corrections on {rtk_server.host}:{rtk_server.port}", flush=True)

    period = ex.cfg.dt_s
    next_tick = time.monotonic()
    try:
        while ex.t < cfg.max_sim_s:
            if stop_event is not None and stop_event.is_set():
                break
            service.step()
            next_tick += period
            delay = next_tick - time.monotonic()
            if delay > 0:
                time.sleep(delay)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
        if rtk_server is not None:
            rtk_server.stop()

    summary = None
    if cfg.out_dir is not None:
        summary = _write_artifacts(cfg.out_dir, ex, service.frames, cfg.seed)
    return RunResult(
        exit_code=0,
        reason="service stopped",
        frames=service.frames,
        summary=summary,
        executive=ex,
    )
