import itertools
import math
import random

import pytest

from fieldrover.errors import (
    ArmRefused,
    InvalidTransition,
    MissionError,
    RecordRejected,
    WorldFileError,
)
from fieldrover.mission import (
    ALLOWED_TRANSITIONS,
    CHECK_NAMES,
    GeotagRecord,
    HealthInputs,
    LedState,
    MissionExecutive,
    MissionPlan,
    MissionState,
    Waypoint,
    export_geotags,
    parse_geotags,
    parse_mission,
    run_prearm,
    validate_transition,
)
from fieldrover.sensors import FixType, GpsConfig, GpsFix, LidarConfig
from fieldrover.world import CircleObstacle, FieldMap, GeoAnchor


def noiseless_executive(fmap=None, plan=None, start=(1.0, 1.0, 0.0), **kwargs):
    fmap = fmap or FieldMap(40.0, 40.0)
    ex = MissionExecutive(
        fmap,
        seed=0,
        start=start,
        gps=GpsConfig.noiseless(),
        lidar=LidarConfig(noise_sigma_m=0.0),
        **kwargs,
    )
    if plan is not None:
        ex.arm()
        ex.upload_mission(plan)
        ex.start_mission()
    return ex


class TestPreArm:
    def test_nominal_is_armable(self):
        report = run_prearm(HealthInputs())
        assert report.armable
        assert list(report.checks) == list(CHECK_NAMES)

    def test_low_battery_single_failure(self):
        report = run_prearm(HealthInputs(battery_v=13.0))  # 3.25 V/cell on 4S
        assert not report.armable
        assert report.failures == ["battery_v_ok"]

    def test_fault_accumulation(self):
        report = run_prearm(HealthInputs(gps_fix=FixType.NONE, vibration=45.0))
        assert set(report.failures) == {"gps_status", "vibration_ok"}

    def test_throttle_not_neutral(self):
        report = run_prearm(HealthInputs(throttle=0.4))
        assert report.failures == ["throttle_neutral"]


class TestArm:
    def test_arm_success(self):
        ex = noiseless_executive()
        ex.arm()
        assert ex.state == MissionState.ARMED
        assert ex.led == LedState.YELLOW_READY

    def test_arm_refused_names_failure(self):
        ex = noiseless_executive(health=HealthInputs(battery_v=12.0))
        with pytest.raises(ArmRefused) as err:
            ex.arm()
        assert "battery_v_ok" in err.value.failures
        assert ex.state == MissionState.DISARMED

    def test_arm_idempotent(self):
        ex = noiseless_executive()
        ex.arm()
        ex.arm()
        assert ex.state == MissionState.ARMED


class TestStateMachine:
    def test_exhaustive_transition_table(self):
        states = list(MissionState)
        for a, b in itertools.product(states, states):
            if (a, b) in ALLOWED_TRANSITIONS:
                validate_transition(a, b)
            else:
                with pytest.raises(InvalidTransition):
                    validate_transition(a, b)

    def test_graph_shape(self):
        assert ALLOWED_TRANSITIONS == {
            (MissionState.DISARMED, MissionState.ARMED),
            (MissionState.ARMED, MissionState.MISSION_RUNNING),
            (MissionState.MISSION_RUNNING, MissionState.HOLD),
            (MissionState.HOLD, MissionState.MISSION_RUNNING),
            (MissionState.MISSION_RUNNING, MissionState.MISSION_COMPLETE),
            (MissionState.MISSION_COMPLETE, MissionState.DISARMED),
        }

    def test_start_without_arm_rejected(self):
        ex = noiseless_executive()
        ex.plan = MissionPlan((Waypoint(5.0, 5.0),))
        with pytest.raises(InvalidTransition):
            ex.start_mission()

    def test_resume_only_from_hold(self):
        ex = noiseless_executive()
        with pytest.raises(InvalidTransition):
            ex.resume()


class TestMissionTicks:
    def test_waypoint_at_start_completes_immediately(self):
        plan = MissionPlan((Waypoint(1.0, 1.0, acceptance_radius=2.0, trigger_camera=True),))
        ex = noiseless_executive(plan=plan)
        ex.rc_heartbeat()
        events = ex.tick()
        kinds = [e.kind for e in events]
        assert kinds == ["WAYPOINT_REACHED", "CAPTURE", "STATE"]
        assert ex.state == MissionState.MISSION_COMPLETE
        assert len(ex.geotags) == 1
        assert ex.led == LedState.GREEN_CAPTURING

    def test_straight_two_waypoint_mission(self):
        plan = MissionPlan(
            (
                Waypoint(10.0, 1.0, trigger_camera=True),
                Waypoint(20.0, 1.0, trigger_camera=True),
            )
        )
        ex = noiseless_executive(plan=plan)
        for _ in range(2000):
            ex.rc_heartbeat()
            ex.tick()
            if ex.state == MissionState.MISSION_COMPLETE:
                break
        assert ex.state == MissionState.MISSION_COMPLETE
        flagged = sum(1 for wp in plan.waypoints if wp.trigger_camera)
        assert len(ex.geotags) == flagged
        assert [g.waypoint_index for g in ex.geotags] == [0, 1]
        assert not ex.collided

    def test_rc_loss_failsafe_holds_within_timeout(self):
        plan = MissionPlan((Waypoint(30.0, 1.0),))
        ex = noiseless_executive(plan=plan)
        ex.rc_heartbeat()
        held_at = None
        for _ in range(100):
            ex.tick()  # heartbeat withheld
            if ex.state == MissionState.HOLD:
                held_at = ex.t
                break
        assert held_at is not None
        assert held_at <= ex.cfg.failsafe_timeout_s + 2 * ex.cfg.dt_s
        reasons = [e for e in ex.event_log if e.kind == "FAILSAFE"]
        assert reasons and reasons[0].data["reason"] == "rc_loss"

    def test_low_battery_failsafe(self):
        plan = MissionPlan((Waypoint(30.0, 1.0),))
        ex = noiseless_executive(plan=plan, health=HealthInputs(battery_v=16.8))
        ex.rc_heartbeat()
        ex.tick()
        from dataclasses import replace

        ex.rover = replace(ex.rover, battery_v=13.0)
        ex.rc_heartbeat()
        ex.tick()
        assert ex.state == MissionState.HOLD
        assert any(
            e.kind == "FAILSAFE" and e.data["reason"] == "battery_low" for e in ex.event_log
        )

    def test_no_motion_in_hold(self):
        plan = MissionPlan((Waypoint(30.0, 1.0),))
        ex = noiseless_executive(plan=plan)
        for _ in range(20):
            ex.rc_heartbeat()
            ex.tick()
        ex.request_hold()
        x, y = ex.rover.x, ex.rover.y
        for _ in range(50):
            ex.rc_heartbeat()
            ex.tick()
            assert ex.rover.speed == 0.0
            assert (ex.rover.x, ex.rover.y) == (x, y)

    def test_resume_after_hold_completes(self):
        plan = MissionPlan((Waypoint(15.0, 1.0),))
        ex = noiseless_executive(plan=plan)
        for _ in range(30):
            ex.rc_heartbeat()
            ex.tick()
        ex.request_hold()
        ex.resume()
        for _ in range(1000):
            ex.rc_heartbeat()
            ex.tick()
            if ex.state == MissionState.MISSION_COMPLETE:
                break
        assert ex.state == MissionState.MISSION_COMPLETE

    def test_disarm_mid_mission_becomes_hold(self):
        plan = MissionPlan((Waypoint(30.0, 1.0),))
        ex = noiseless_executive(plan=plan)
        ex.rc_heartbeat()
        ex.tick()
        ex.request_disarm()
        assert ex.state == MissionState.HOLD

    def test_capture_pairing_and_led(self):
        plan = MissionPlan(
            (
                Waypoint(8.0, 1.0, trigger_camera=True),
                Waypoint(16.0, 1.0),
                Waypoint(24.0, 1.0, trigger_camera=True),
            )
        )
        ex = noiseless_executive(plan=plan)
        for _ in range(2000):
            ex.rc_heartbeat()
            before = len(ex.geotags)
            events = ex.tick()
            captures = [e for e in events if e.kind == "CAPTURE"]
            assert len(ex.geotags) - before == len(captures)
            assert (ex.led == LedState.GREEN_CAPTURING) == bool(captures)
            if ex.state == MissionState.MISSION_COMPLETE:
                break
        assert ex.state == MissionState.MISSION_COMPLETE
        assert len(ex.geotags) == 2

    def test_waypoint_indices_monotone(self):
        plan = MissionPlan((Waypoint(8.0, 1.0), Waypoint(16.0, 1.0), Waypoint(24.0, 1.0)))
        ex = noiseless_executive(plan=plan)
        last = 0
        for _ in range(2000):
            ex.rc_heartbeat()
            ex.tick()
            assert ex.wp_index >= last
            last = ex.wp_index
            if ex.state == MissionState.MISSION_COMPLETE:
                break
        assert ex.state == MissionState.MISSION_COMPLETE

    def test_upload_rejected_while_running(self):
        plan = MissionPlan((Waypoint(30.0, 1.0),))
        ex = noiseless_executive(plan=plan)
        with pytest.raises(MissionError):
            ex.upload_mission(plan)

    def test_speed_limit_validated_on_upload(self):
        ex = noiseless_executive()
        ex.arm()
        with pytest.raises(MissionError):
            ex.upload_mission(MissionPlan((Waypoint(5.0, 5.0, speed=50.0),)))

    def test_manual_override_and_deadman(self):
        plan = MissionPlan((Waypoint(30.0, 1.0),))
        ex = noiseless_executive(plan=plan)
        for _ in range(40):
            ex.rc_heartbeat()
            ex.tick()
        ex.set_override(0.0, 1.0)  # brake and steer hard left
        ex.rc_heartbeat()
        ex.tick()
        assert ex.rover.steer_angle == ex.kinematics.max_steer_rad
        # dead-man: override expires after the timeout and the mission resumes
        expire_ticks = int(ex.cfg.override_timeout_s / ex.cfg.dt_s) + 2
        for _ in range(expire_ticks):
            ex.rc_heartbeat()
            ex.tick()
        assert ex._override is None


class TestMissionFiles:
    def test_parse_local_mission(self):
        plan = parse_mission(
            {
                "frame": "local",
                "waypoints": [
                    {"x": 1.0, "y": 2.0, "speed": 1.5, "acceptance_radius": 1.0,
                     "trigger_camera": True}
                ],
            }
        )
        assert plan.waypoints[0].trigger_camera

    def test_parse_geo_mission_converts(self):
        anchor = GeoAnchor(37.0, -121.0)
        lat, lon = anchor.to_geo(10.0, 20.0)
        plan = parse_mission(
            {"frame": "geo", "waypoints": [{"lat": lat, "lon": lon}]}, anchor
        )
        assert plan.waypoints[0].x == pytest.approx(10.0, abs=1e-6)
        assert plan.waypoints[0].y == pytest.approx(20.0, abs=1e-6)

    def test_geo_mission_without_anchor_rejected(self):
        with pytest.raises(WorldFileError):
            parse_mission({"frame": "geo", "waypoints": [{"lat": 1.0, "lon": 2.0}]})

    def test_unknown_fields_rejected(self):
        with pytest.raises(WorldFileError):
            parse_mission({"frame": "local", "waypoints": [], "extra": 1})
        with pytest.raises(WorldFileError):
            parse_mission({"frame": "local", "waypoints": [{"x": 1, "y": 2, "zz": 3}]})


def random_records(rng, n, anchor=None):
    cfg = GpsConfig()
    records = []
    for i in range(n):
        mode = rng.choice([FixType.GPS_3D, FixType.RTK_FLOAT, FixType.RTK_FIXED])
        fix = GpsFix(
            est_x=rng.uniform(0, 500),
            est_y=rng.uniform(0, 500),
            fix_type=mode,
            horizontal_sigma_m=cfg.sigma_for(mode),
        )
        records.append(
            GeotagRecord(
                image_id=f"img_{i:04d}",
                t=round(rng.uniform(0, 1000), 3),
                fix=fix,
                waypoint_index=rng.randrange(20),
            )
        )
    return records


class TestGeotagExport:
    def test_empty_documents_valid(self):
        assert export_geotags([], "csv").startswith("image_id,")
        assert '"features": []' in export_geotags([], "geojson")

    def test_order_preserved(self):
        rng = random.Random(1)
        records = random_records(rng, 3)
        parsed = parse_geotags(export_geotags(records, "geojson"), "geojson")
        assert [r.image_id for r in parsed] == [r.image_id for r in records]

    @pytest.mark.parametrize("fmt", ["csv", "geojson"])
    def test_round_trip_exact(self, fmt):
        rng = random.Random(42)
        for _ in range(100):
            records = random_records(rng, rng.randint(0, 10))
            text = export_geotags(records, fmt)
            assert parse_geotags(text, fmt) == records

    @pytest.mark.parametrize("fmt", ["csv", "geojson"])
    def test_geo_anchored_round_trip_close(self, fmt):
        anchor = GeoAnchor(37.3352, -121.8811)
        rng = random.Random(3)
        records = random_records(rng, 5)
        text = export_geotags(records, fmt, anchor)
        parsed = parse_geotags(text, fmt, anchor)
        for a, b in zip(parsed, records):
            assert a.fix.est_x == pytest.approx(b.fix.est_x, abs=1e-6)
            assert a.fix.est_y == pytest.approx(b.fix.est_y, abs=1e-6)
            assert a.fix.fix_type == b.fix.fix_type

    def test_none_fix_rejected(self):
        bad = GeotagRecord(
            image_id="img_0001",
            t=1.0,
            fix=GpsFix(None, None, FixType.NONE, 0.0),
            waypoint_index=0,
        )
        with pytest.raises(RecordRejected):
            export_geotags([bad], "csv")


class TestBlockedAndDisarmed:
    def test_no_motion_while_disarmed(self):
        ex = noiseless_executive()
        for _ in range(30):
            ex.tick()
            assert ex.rover.speed == 0.0
            assert (ex.rover.x, ex.rover.y) == (1.0, 1.0)

    def test_zero_commanded_speed_when_blocked(self):
        # obstacle ring around the start: every candidate corridor is blocked
        ring = tuple(
            CircleObstacle(5.0 + 2.0 * math.cos(a), 5.0 + 2.0 * math.sin(a), 0.5)
            for a in [i * math.pi / 8 for i in range(16)]
        )
        fmap = FieldMap(10.0, 10.0, ring)
        plan_map = FieldMap(10.0, 10.0)
        ex = MissionExecutive(
            fmap,
            plan_map=plan_map,
            seed=0,
            start=(5.0, 5.0, 0.0),
            gps=GpsConfig.noiseless(),
            lidar=LidarConfig(noise_sigma_m=0.0),
        )
        ex.arm()
        ex.upload_mission(MissionPlan((Waypoint(9.0, 9.0, acceptance_radius=0.5),)))
        ex.start_mission()
        for _ in range(60):
            ex.rc_heartbeat()
            ex.tick()
        assert ex.last_decision is not None and not ex.last_decision.clear
        assert ex.rover.speed == 0.0
        assert not ex.collided
