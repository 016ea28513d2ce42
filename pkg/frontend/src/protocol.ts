/**
 * Wire protocol shared with the simulator: UTF-8 newline-delimited JSON,
 * one object per line. Frames carry type "frame", commands "command",
 * command responses "ack".
 */

export interface TelemetryFrame {
  type: "frame";
  t: number;
  mode: string;
  armed: boolean;
  x: number;
  y: number;
  heading_deg: number;
  ground_speed: number;
  distance_to_waypoint: number;
  next_waypoint: number;
  battery_v: number;
  fix_type: string;
  led: string;
  lat?: number;
  lon?: number;
  last_event?: { kind: string; [key: string]: unknown };
}

export interface Ack {
  type: "ack";
  seq: number | null;
  accepted: boolean;
  reason?: string;
}

export type CommandKind =
  | "ARM"
  | "DISARM"
  | "SET_MODE"
  | "UPLOAD_MISSION"
  | "MANUAL_OVERRIDE"
  | "START_MISSION";

export interface Command {
  type: "command";
  kind: CommandKind;
  seq: number;
  payload: Record<string, unknown>;
}

export interface WaypointDraft {
  x: number;
  y: number;
  speed: number;
  acceptance_radius: number;
  trigger_camera: boolean;
}

export type Inbound = TelemetryFrame | Ack;

export function parseLine(line: string): Inbound | null {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null) return null;
  const rec = obj as Record<string, unknown>;
  if (rec.type === "frame" || rec.type === "ack") {
    return rec as unknown as Inbound;
  }
  return null;
}

export function commandLine(kind: CommandKind, seq: number, payload: Record<string, unknown> = {}): string {
  const cmd: Command = { type: "command", kind, seq, payload };
  return JSON.stringify(cmd);
}

export function missionPayload(waypoints: WaypointDraft[]): Record<string, unknown> {
  return {
    frame: "local",
    waypoints: waypoints.map((w) => ({
      x: w.x,
      y: w.y,
      speed: w.speed,
      acceptance_radius: w.acceptance_radius,
      trigger_camera: w.trigger_camera,
    })),
  };
}

/** Accumulates stream chunks and yields complete lines. */
export class LineSplitter {
  private buffer = "";

  push(chunk: string): string[] {
    this.buffer += chunk;
    const lines = this.buffer.split("\n");
    this.buffer = lines.pop() ?? "";
    return lines.filter((l) => l.trim().length > 0);
  }
}
