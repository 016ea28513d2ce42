"""Telemetry wire protocol and service endpoint.

Everything on the wire is UTF-8 newline-delimited JSON, one object per
line: frames carry "type":"frame", commands "type":"command", command
responses "type":"ack". Frames broadcast to every connected client;
commands are queued and applied by the simulation thread only at tick
boundaries, so a frame never reflects a half-applied command. A second,
broadcast-only endpoint can serve the base-station correction stream.
"""

from __future__ import annotations

import json
import math
import queue
import socket
import threading
from dataclasses import dataclass

from .mission import MissionExecutive, MissionState
from .sensors import FixType
from .world import FieldMap, clearance

COMMAND_KINDS = ("ARM", "DISARM", "SET_MODE", "UPLOAD_MISSION", "MANUAL_OVERRIDE", "START_MISSION")


@dataclass(frozen=True)
class TelemetryFrame:
    t: float
    mode: str
    armed: bool
    x: float
    y: float
    heading_deg: float
    ground_speed: float
    distance_to_waypoint: float
    next_waypoint: int
    battery_v: float
    fix_type: str
    led: str
    lat: float | None = None
    lon: float | None = None
    last_event: dict | None = None

    def to_obj(self) -> dict:
        obj = {
            "type": "frame",
            "t": self.t,
            "mode": self.mode,
            "armed": self.armed,
            "x": self.x,
            "y": self.y,
            "heading_deg": self.heading_deg,
            "ground_speed": self.ground_speed,
            "distance_to_waypoint": self.distance_to_waypoint,
            "next_waypoint": self.next_waypoint,
            "battery_v": self.battery_v,
            "fix_type": self.fix_type,
            "led": self.led,
        }
        if self.lat is not None:
            obj["lat"] = self.lat
            obj["lon"] = self.lon
        if self.last_event is not None:
            obj["last_event"] = self.last_event
        return obj

    def to_line(self) -> str:
        return json.dumps(self.to_obj(), separators=(",", ":"))

    @classmethod
    def from_obj(cls, obj: dict) -> "TelemetryFrame":
        return cls(
            t=obj["t"],
            mode=obj["mode"],
            armed=obj["armed"],
            x=obj["x"],
            y=obj["y"],
            heading_deg=obj["heading_deg"],
            ground_speed=obj["ground_speed"],
            distance_to_waypoint=obj["distance_to_waypoint"],
            next_waypoint=obj["next_waypoint"],
            battery_v=obj["battery_v"],
            fix_type=obj["fix_type"],
            led=obj["led"],
            lat=obj.get("lat"),
            lon=obj.get("lon"),
            last_event=obj.get("last_event"),
        )


def build_frame(ex: MissionExecutive, last_event: dict | None = None) -> TelemetryFrame:
    fix = ex.last_fix
    est_x = fix.est_x if fix and fix.est_x is not None else ex.rover.x
    est_y = fix.est_y if fix and fix.est_y is not None else ex.rover.y
    lat = lon = None
    anchor = ex.world_map.origin_geo
    if anchor is not None:
        lat, lon = anchor.to_geo(est_x, est_y)
    return TelemetryFrame(
        t=ex.t,
        mode=ex.state.value,
        armed=ex.state != MissionState.DISARMED,
        x=est_x,
        y=est_y,
        heading_deg=math.degrees(ex.rover.heading) % 360.0,
        ground_speed=ex.rover.speed,
        distance_to_waypoint=ex.distance_to_waypoint,
        next_waypoint=ex.wp_index,
        battery_v=ex.rover.battery_v,
        fix_type=(fix.fix_type.value if fix else FixType.NONE.value),
        led=ex.led.value,
        lat=lat,
        lon=lon,
        last_event=last_event,
    )


@dataclass
class CommandEntry:
    """One received line, parsed by the reader thread, applied at tick time."""

    client_id: int
    seq: int | None
    kind: str | None
    payload: dict
    error: str | None = None


class _Client:
    def __init__(self, client_id: int, sock: socket.socket):
        self.client_id = client_id
        self.sock = sock
        self.outbox: queue.Queue[bytes | None] = queue.Queue()
        self.last_seq: int | None = None
        self.alive = True


class LineServer:
    """Threaded newline-JSON TCP server: broadcast out, command lines in."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, accept_commands: bool = True):
        self.accept_commands = accept_commands
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(16)
        self.host, self.port = self._listener.getsockname()
        self._clients: dict[int, _Client] = {}
        self._lock = threading.Lock()
        self._commands: queue.Queue[CommandEntry] = queue.Queue()
        self._next_id = 0
        self._running = False
        self._threads: list[threading.Thread] = []

    def start(self) -> None:
        self._running = True
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)

    def stop(self) -> None:
        self._running = False
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            clients = list(self._clients.values())
        for c in clients:
            c.outbox.put(None)
            try:
                c.sock.close()
            except OSError:
                pass

    def _accept_loop(self) -> None:
        while self._running:
            try:
                sock, _ = self._listener.accept()
            except OSError:
                return
            with self._lock:
                self._next_id += 1
                client = _Client(self._next_id, sock)
                self._clients[client.client_id] = client
            writer = threading.Thread(target=self._writer_loop, args=(client,), daemon=True)
            writer.start()
            reader = threading.Thread(target=self._reader_loop, args=(client,), daemon=True)
            reader.start()

    def _writer_loop(self, client: _Client) -> None:
        while True:
            data = client.outbox.get()
            if data is None:
                return
            try:
                client.sock.sendall(data)
            except OSError:
                self._drop(client)
                return

    def _reader_loop(self, client: _Client) -> None:
        buf = b""
        while client.alive:
            try:
                chunk = client.sock.recv(4096)
            except OSError:
                break
            if not chunk:
                break
            buf += chunk
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                if line.strip():
                    self._handle_line(client, line)
        self._drop(client)

    def _handle_line(self, client: _Client, line: bytes) -> None:
        if not self.accept_commands:
            return
        entry = CommandEntry(client_id=client.client_id, seq=None, kind=None, payload={})
        try:
            obj = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            entry.error = "malformed json"
            self._commands.put(entry)
            return
        if not isinstance(obj, dict):
            entry.error = "command must be a JSON object"
            self._commands.put(entry)
            return
        seq = obj.get("seq")
        entry.seq = seq if isinstance(seq, int) else None
        kind = obj.get("kind")
        entry.kind = kind if isinstance(kind, str) else None
        payload = obj.get("payload", {})
        entry.payload = payload if isinstance(payload, dict) else {}
        if entry.seq is None:
            entry.error = "missing integer seq"
        elif client.last_seq is not None and entry.seq <= client.last_seq:
            entry.error = f"seq {entry.seq} not increasing"
        elif entry.kind not in COMMAND_KINDS:
            entry.error = f"unknown command kind {kind!r}"
        if entry.seq is not None:
            client.last_seq = entry.seq
        self._commands.put(entry)

    def _drop(self, client: _Client) -> None:
        if not client.alive:
            return
        client.alive = False
        client.outbox.put(None)
        with self._lock:
            self._clients.pop(client.client_id, None)
        try:
            client.sock.close()
        except OSError:
            pass

    def broadcast(self, line: str) -> None:
        data = (line + "\n").encode("utf-8")
        with self._lock:
            clients = list(self._clients.values())
        for c in clients:
            c.outbox.put(data)

    def send_to(self, client_id: int, line: str) -> None:
        with self._lock:
            client = self._clients.get(client_id)
        if client is not None:
            client.outbox.put((line + "\n").encode("utf-8"))

    def drain_commands(self) -> list[CommandEntry]:
        out = []
        while True:
            try:
                out.append(self._commands.get_nowait())
            except queue.Empty:
                return out

    @property
    def client_count(self) -> int:
        with self._lock:
            return len(self._clients)


def ack_line(seq: int | None, accepted: bool, reason: str | None = None) -> str:
    obj: dict = {"type": "ack", "seq": seq, "accepted": accepted}
    if reason is not None:
        obj["reason"] = reason
    return json.dumps(obj, separators=(",", ":"))


def correction_line(t: float, dx: float, dy: float) -> str:
    return json.dumps({"t": t, "dx": dx, "dy": dy}, separators=(",", ":"))


# frame log --------------------------------------------------------------------


def write_frame_log(path, frames: list[TelemetryFrame]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for frame in frames:
            fh.write(frame.to_line() + "\n")


def read_frame_log(path) -> list[TelemetryFrame]:
    frames = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                frames.append(TelemetryFrame.from_obj(json.loads(line)))
    return frames


def summarize_frames(frames: list[TelemetryFrame], fmap: FieldMap, rover_radius_m: float = 0.4) -> dict:
    """Mission statistics derived purely from the frame stream.

    Live runs and log replays call this on the same frame sequence, so the
    two summaries are identical by construction. Distance and clearance are
    measured on the estimated (telemetry) track.
    """
    from .world import RoverState  # local import to avoid cycle at module load

    completed = any(f.mode == MissionState.MISSION_COMPLETE.value for f in frames)
    completion_time = None
    for f in frames:
        if f.mode == MissionState.MISSION_COMPLETE.value:
            completion_time = f.t
            break
    distance = 0.0
    min_clear = math.inf
    for i, f in enumerate(frames):
        if i > 0:
            distance += math.hypot(f.x - frames[i - 1].x, f.y - frames[i - 1].y)
        c = clearance(RoverState(x=f.x, y=f.y), fmap, rover_radius_m)
        min_clear = min(min_clear, c)
    return {
        "completed": completed,
        "final_state": frames[-1].mode if frames else None,
        "waypoints_hit": max((f.next_waypoint for f in frames), default=0),
        "distance_traveled_m": distance,
        "min_clearance_m": None if math.isinf(min_clear) else min_clear,
        "completion_time_s": completion_time,
        "duration_s": frames[-1].t if frames else 0.0,
        "frame_count": len(frames),
    }
