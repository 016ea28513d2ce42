import json
import socket
import time

import pytest

from fieldrover import runner
from fieldrover.mission import HealthInputs, MissionExecutive, MissionPlan, Waypoint
from fieldrover.runner import MissionService, RunConfig
from fieldrover.sensors import GpsConfig, LidarConfig
from fieldrover.telemetry import (
    LineServer,
    TelemetryFrame,
    read_frame_log,
    summarize_frames,
    write_frame_log,
)
from fieldrover.world import FieldMap


class Client:
    """Minimal blocking NDJSON test client."""

    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=5.0)
        self.buf = b""
        self.seq = 0

    def send_raw(self, text):
        self.sock.sendall(text.encode("utf-8"))

    def send_command(self, kind, payload=None, seq=None):
        self.seq = seq if seq is not None else self.seq + 1
        self.send_raw(
            json.dumps({"kind": kind, "seq": self.seq, "payload": payload or {}}) + "\n"
        )
        return self.seq

    def read_line(self, timeout=5.0):
        self.sock.settimeout(timeout)
        while b"\n" not in self.buf:
            chunk = self.sock.recv(4096)
            if not chunk:
                raise ConnectionError("closed")
            self.buf += chunk
        line, self.buf = self.buf.split(b"\n", 1)
        return json.loads(line.decode("utf-8"))

    def read_until(self, kind, timeout=5.0, predicate=None):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            obj = self.read_line(timeout=max(0.05, deadline - time.monotonic()))
            if obj.get("type") == kind and (predicate is None or predicate(obj)):
                return obj
        raise TimeoutError(f"no {kind} within {timeout}s")

    def close(self):
        self.sock.close()


def make_service(fmap=None, plan=None):
    ex = MissionExecutive(
        fmap or FieldMap(40.0, 40.0),
        seed=0,
        gps=GpsConfig.noiseless(),
        lidar=LidarConfig(noise_sigma_m=0.0),
    )
    if plan is not None:
        ex.plan = None
    server = LineServer(port=0)
    server.start()
    return ex, server, MissionService(ex, server)


class TestFrameCodec:
    def test_round_trip_with_optionals(self):
        frame = TelemetryFrame(
            t=1.5, mode="ARMED", armed=True, x=1.0, y=2.0, heading_deg=90.0,
            ground_speed=0.5, distance_to_waypoint=3.0, next_waypoint=1,
            battery_v=16.8, fix_type="RTK_FIXED", led="YELLOW_READY",
            lat=37.0, lon=-121.0, last_event={"kind": "CAPTURE", "image_id": "img_0001"},
        )
        assert TelemetryFrame.from_obj(json.loads(frame.to_line())) == frame

    def test_optionals_omitted(self):
        frame = TelemetryFrame(
            t=1.5, mode="DISARMED", armed=False, x=1.0, y=2.0, heading_deg=0.0,
            ground_speed=0.0, distance_to_waypoint=0.0, next_waypoint=0,
            battery_v=16.8, fix_type="GPS_3D", led="RED_BOOTING",
        )
        obj = json.loads(frame.to_line())
        assert "lat" not in obj and "last_event" not in obj
        assert TelemetryFrame.from_obj(obj) == frame


class TestServer:
    def test_two_clients_see_identical_frames_and_acks(self):
        ex, server, service = make_service()
        try:
            c1 = Client(server.port)
            c2 = Client(server.port)
            time.sleep(0.1)
            for _ in range(6):
                service.step()
            f1 = [c1.read_until("frame") for _ in range(3)]
            f2 = [c2.read_until("frame") for _ in range(3)]
            assert f1 == f2
        finally:
            server.stop()

    def test_arm_command_ack_and_frame(self):
        ex, server, service = make_service()
        try:
            c = Client(server.port)
            time.sleep(0.1)
            seq = c.send_command("ARM")
            time.sleep(0.1)
            for _ in range(4):
                service.step()
            ack = c.read_until("ack")
            assert ack["seq"] == seq and ack["accepted"] is True
            frame = c.read_until("frame")
            assert frame["armed"] is True
        finally:
            server.stop()

    def test_arm_refused_lists_failures(self):
        ex, server, service = make_service()
        ex.health = HealthInputs(battery_v=12.0)
        try:
            c = Client(server.port)
            time.sleep(0.1)
            c.send_command("ARM")
            time.sleep(0.1)
            service.step()
            ack = c.read_until("ack")
            assert ack["accepted"] is False
            assert "battery_v_ok" in ack["reason"]
        finally:
            server.stop()

    def test_malformed_line_nack_connection_survives(self):
        ex, server, service = make_service()
        try:
            c = Client(server.port)
            time.sleep(0.1)
            c.send_raw("this is not json\n")
            time.sleep(0.1)
            service.step()
            ack = c.read_until("ack")
            assert ack["accepted"] is False and "malformed" in ack["reason"]
            seq = c.send_command("ARM")
            time.sleep(0.1)
            service.step()
            ack2 = c.read_until("ack")
            assert ack2["seq"] == seq and ack2["accepted"] is True
        finally:
            server.stop()

    def test_invalid_mission_upload_nack(self):
        ex, server, service = make_service()
        try:
            c = Client(server.port)
            time.sleep(0.1)
            c.send_command("ARM")
            c.send_command(
                "UPLOAD_MISSION",
                {"frame": "local", "waypoints": [{"x": 5.0, "y": 5.0, "speed": 99.0}]},
            )
            time.sleep(0.1)
            service.step()
            c.read_until("ack")  # ARM
            ack = c.read_until("ack")
            assert ack["accepted"] is False and "invalid mission" in ack["reason"]
            assert ex.plan is None
        finally:
            server.stop()

    def test_seq_must_increase(self):
        ex, server, service = make_service()
        try:
            c = Client(server.port)
            time.sleep(0.1)
            c.send_command("ARM", seq=5)
            c.send_command("DISARM", seq=5)
            time.sleep(0.1)
            service.step()
            first = c.read_until("ack")
            second = c.read_until("ack")
            assert first["accepted"] is True
            assert second["accepted"] is False and "not increasing" in second["reason"]
        finally:
            server.stop()

    def test_unknown_kind_rejected(self):
        ex, server, service = make_service()
        try:
            c = Client(server.port)
            time.sleep(0.1)
            c.send_command("SELF_DESTRUCT")
            time.sleep(0.1)
            service.step()
            ack = c.read_until("ack")
            assert ack["accepted"] is False and "unknown command kind" in ack["reason"]
        finally:
            server.stop()

    def test_heartbeat_rate_realtime(self):
        # idle client on a real-time paced loop sees 10 +/- 1 Hz
        ex = MissionExecutive(FieldMap(40.0, 40.0), seed=0)
        server = LineServer(port=0)
        server.start()
        service = MissionService(ex, server)
        try:
            c = Client(server.port)
            time.sleep(0.1)
            t0 = time.monotonic()
            next_tick = t0
            while time.monotonic() - t0 < 2.0:
                service.step()
                next_tick += ex.cfg.dt_s
                delay = next_tick - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
            count = 0
            try:
                while True:
                    c.read_until("frame", timeout=0.2)
                    count += 1
            except (TimeoutError, ConnectionError):
                pass
            elapsed = time.monotonic() - t0
            rate = count / elapsed
            assert 9.0 <= rate <= 11.0, f"rate {rate:.2f} Hz over {elapsed:.2f}s"
        finally:
            server.stop()


class TestLogReplay:
    def test_empty_log_round_trip(self, tmp_path):
        path = tmp_path / "log.ndjson"
        write_frame_log(path, [])
        assert read_frame_log(path) == []

    def test_line_count_equals_frames(self, tmp_path):
        cfg = RunConfig(
            world_path="fixtures/worlds/field_small.json",
            mission_path="fixtures/missions/two_waypoints.json",
            seed=11, out_dir=str(tmp_path / "out"),
        )
        res = runner.run_mission(cfg)
        assert res.exit_code == 0
        log = tmp_path / "out" / "telemetry.ndjson"
        lines = [l for l in log.read_text().splitlines() if l.strip()]
        assert len(lines) == len(res.frames)

    def test_replay_summary_identical(self, tmp_path):
        from fieldrover.world import load_world

        cfg = RunConfig(
            world_path="fixtures/worlds/field_small.json",
            mission_path="fixtures/missions/two_waypoints.json",
            seed=11, out_dir=str(tmp_path / "out"),
        )
        res = runner.run_mission(cfg)
        fmap = load_world(cfg.world_path)
        frames = read_frame_log(tmp_path / "out" / "telemetry.ndjson")
        live = summarize_frames(res.frames, fmap)
        replayed = summarize_frames(frames, fmap)
        assert live == replayed


class TestServiceInvariants:
    def test_port_busy_raises_startup_error(self):
        first = LineServer(port=0)
        try:
            with pytest.raises(OSError):
                LineServer(port=first.port)
        finally:
            first.stop()

    def test_observers_do_not_perturb(self):
        # same mission with and without a silent client attached produces
        # identical frame streams and summaries
        from fieldrover.world import load_world

        def run(with_client):
            cfg = RunConfig(
                world_path="fixtures/worlds/field_small.json",
                mission_path="fixtures/missions/two_waypoints.json",
                seed=21,
            )
            ex = runner.build_executive(cfg)
            from fieldrover.mission import load_mission

            ex.arm()
            ex.upload_mission(load_mission(cfg.mission_path, ex.world_map.origin_geo))
            ex.start_mission()
            server = client = None
            if with_client:
                server = LineServer(port=0)
                server.start()
                client = Client(server.port)
                time.sleep(0.1)
            service = MissionService(ex, server)
            from fieldrover.mission import MissionState

            for _ in range(4000):
                service.step()
                if ex.state == MissionState.MISSION_COMPLETE:
                    break
            if server is not None:
                server.stop()
            fmap = load_world(cfg.world_path)
            return [f.to_line() for f in service.frames], summarize_frames(service.frames, fmap)

        frames_solo, summary_solo = run(False)
        frames_watched, summary_watched = run(True)
        assert frames_solo == frames_watched
        assert summary_solo == summary_watched

    def test_rtk_correction_stream_port(self):
        from fieldrover.mission import MissionExecutive as Ex

        ex = Ex(FieldMap(40.0, 40.0), seed=3, rtk_enabled=True)
        rtk_server = LineServer(port=0, accept_commands=False)
        rtk_server.start()
        service = MissionService(ex, server=None, rtk_server=rtk_server)
        try:
            c = Client(rtk_server.port)
            time.sleep(0.1)
            for _ in range(30):  # 1.5 s sim time crosses the 1 Hz cadence
                service.step()
            line = c.read_line(timeout=5.0)
            assert set(line) == {"t", "dx", "dy"}
            assert isinstance(line["t"], float)
        finally:
            rtk_server.stop()
