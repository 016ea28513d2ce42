/**
 * Ground-station session state: the single source everything on screen
 * renders from. Only server-ACKed state is authoritative; the mission
 * draft stays client-side until an UPLOAD_MISSION is accepted, and every
 * displayed number traces back to a field of the latest telemetry frame.
 */

import { Ack, TelemetryFrame, WaypointDraft, missionPayload } from "./protocol.js";
import { ClientStatus, TelemetryClient } from "./client.js";

export interface CaptureMarker {
  imageId: string;
  x: number;
  y: number;
  waypointIndex: number;
  t: number;
}

export interface CommandRecord {
  seq: number;
  kind: string;
  status: "pending" | "accepted" | "rejected";
  reason?: string;
}

export type SessionStatus = "connecting" | "connected" | "stale" | "disconnected";

export interface SessionOptions {
  staleMs?: number;
  now?: () => number;
}

const DEFAULT_WAYPOINT = { speed: 2.0, acceptance_radius: 2.0, trigger_camera: false };

export class GcsSession {
  latestFrame: TelemetryFrame | null = null;
  lastFrameAt: number | null = null;
  draft: WaypointDraft[] = [];
  /** Mission as last ACKed by the server; rendered as the mission overlay. */
  authoritativeMission: WaypointDraft[] | null = null;
  history: CommandRecord[] = [];
  captures: CaptureMarker[] = [];
  lastError: string | null = null;
  private connection: ClientStatus = "connecting";
  private readonly staleMs: number;
  private readonly now: () => number;
  private changeCb: (() => void) | null = null;
  private overrideTimer: ReturnType<typeof setInterval> | null = null;

  constructor(private client: TelemetryClient, opts: SessionOptions = {}) {
    this.staleMs = opts.staleMs ?? 3000;
    this.now = opts.now ?? (() => Date.now());
    client.onFrame((frame) => this.ingestFrame(frame));
    client.onStatus((status) => {
      this.connection = status;
      this.notify();
    });
  }

  onChange(cb: () => void): void {
    this.changeCb = cb;
  }

  private notify(): void {
    this.changeCb?.();
  }

  get status(): SessionStatus {
    if (this.connection !== "connected") return this.connection;
    if (this.lastFrameAt !== null && this.now() - this.lastFrameAt > this.staleMs) {
      return "stale";
    }
    return "connected";
  }

  ingestFrame(frame: TelemetryFrame): void {
    this.latestFrame = frame;
    this.lastFrameAt = this.now();
    const ev = frame.last_event;
    if (ev && ev.kind === "CAPTURE") {
      const imageId = String(ev.image_id ?? "");
      if (!this.captures.some((c) => c.imageId === imageId)) {
        this.captures.push({
          imageId,
          x: frame.x,
          y: frame.y,
          waypointIndex: Number(ev.waypoint_index ?? frame.next_waypoint),
          t: frame.t,
        });
      }
    }
    this.notify();
  }

  // -- mission editing ------------------------------------------------------

  addWaypoint(x: number, y: number, overrides: Partial<WaypointDraft> = {}): void {
    this.draft.push({ x, y, ...DEFAULT_WAYPOINT, ...overrides });
    this.notify();
  }

  updateWaypoint(index: number, patch: Partial<WaypointDraft>): void {
    const wp = this.draft[index];
    if (wp) {
      this.draft[index] = { ...wp, ...patch };
      this.notify();
    }
  }

  removeWaypoint(index: number): void {
    this.draft.splice(index, 1);
    this.notify();
  }

  clearDraft(): void {
    this.draft = [];
    this.notify();
  }

  // -- commands ---------------------------------------------------------------

  private async tracked(kind: string, run: () => Promise<Ack>): Promise<Ack> {
    const record: CommandRecord = { seq: -1, kind, status: "pending" };
    this.history.push(record);
    this.notify();
    try {
      const ack = await run();
      record.seq = ack.seq ?? -1;
      record.status = ack.accepted ? "accepted" : "rejected";
      record.reason = ack.reason;
      if (!ack.accepted) this.lastError = ack.reason ?? `${kind} rejected`;
      this.notify();
      return ack;
    } catch (err) {
      record.status = "rejected";
      record.reason = String(err);
      this.lastError = String(err);
      this.notify();
      throw err;
    }
  }

  async uploadMission(): Promise<Ack> {
    const snapshot = this.draft.map((w) => ({ ...w }));
    const ack = await this.tracked("UPLOAD_MISSION", () =>
      this.client.command("UPLOAD_MISSION", missionPayload(snapshot)),
    );
    if (ack.accepted) {
      this.authoritativeMission = snapshot;
      this.notify();
    }
    // a rejected upload leaves the draft untouched for editing
    return ack;
  }

  arm(): Promise<Ack> {
    return this.tracked("ARM", () => this.client.command("ARM"));
  }

  disarm(): Promise<Ack> {
    return this.tracked("DISARM", () => this.client.command("DISARM"));
  }

  startMission(): Promise<Ack> {
    return this.tracked("START_MISSION", () => this.client.command("START_MISSION"));
  }

  hold(): Promise<Ack> {
    return this.tracked("SET_MODE", () => this.client.command("SET_MODE", { mode: "HOLD" }));
  }

  resume(): Promise<Ack> {
    return this.tracked("SET_MODE", () =>
      this.client.command("SET_MODE", { mode: "MISSION_RUNNING" }),
    );
  }

  /** Joystick engaged: refresh the override faster than the dead-man. */
  engageOverride(throttle: number, steer: number, rateHz = 10): void {
    this.releaseOverride();
    const send = () => this.client.send("MANUAL_OVERRIDE", { throttle, steer });
    send();
    this.overrideTimer = setInterval(send, 1000 / rateHz);
  }

  releaseOverride(): void {
    if (this.overrideTimer !== null) {
      clearInterval(this.overrideTimer);
      this.overrideTimer = null;
    }
  }

  close(): void {
    this.releaseOverride();
    this.client.stop();
  }
}
