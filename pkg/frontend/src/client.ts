/**
 * Telemetry client: sends sequenced commands, resolves their ACKs, and
 * hands every frame to the listener. Reconnects with capped exponential
 * backoff so a restarted simulator picks the session back up.
 */

import { Ack, CommandKind, Inbound, commandLine, parseLine, TelemetryFrame } from "./protocol.js";
import { LineTransport } from "./transport.js";

export type ClientStatus = "connecting" | "connected" | "disconnected";

export interface ClientOptions {
  ackTimeoutMs?: number;
  reconnect?: boolean;
  backoffStartMs?: number;
  backoffMaxMs?: number;
}

interface PendingAck {
  resolve: (ack: Ack) => void;
  reject: (err: Error) => void;
  timer: ReturnType<typeof setTimeout>;
}

export class TelemetryClient {
  private seq = 0;
  private pending = new Map<number, PendingAck>();
  private frameCb: ((frame: TelemetryFrame) => void) | null = null;
  private statusCb: ((status: ClientStatus) => void) | null = null;
  private stopped = false;
  private readonly ackTimeoutMs: number;
  private readonly reconnect: boolean;
  private readonly backoffStartMs: number;
  private readonly backoffMaxMs: number;

  constructor(
    private makeTransport: () => LineTransport,
    opts: ClientOptions = {},
  ) {
    this.ackTimeoutMs = opts.ackTimeoutMs ?? 5000;
    this.reconnect = opts.reconnect ?? true;
    this.backoffStartMs = opts.backoffStartMs ?? 250;
    this.backoffMaxMs = opts.backoffMaxMs ?? 5000;
  }

  private transport: LineTransport | null = null;

  onFrame(cb: (frame: TelemetryFrame) => void): void {
    this.frameCb = cb;
  }

  onStatus(cb: (status: ClientStatus) => void): void {
    this.statusCb = cb;
  }

  async start(): Promise<void> {
    this.stopped = false;
    let backoff = this.backoffStartMs;
    // retry until the first connection lands, then let onClose re-enter
    for (;;) {
      this.statusCb?.("connecting");
      const transport = this.makeTransport();
      transport.onLine((line) => this.handleLine(line));
      transport.onClose(() => this.handleClose());
      try {
        await transport.connect();
        this.transport = transport;
        this.statusCb?.("connected");
        return;
      } catch {
        if (this.stopped || !this.reconnect) throw new Error("connect failed");
        await new Promise((r) => setTimeout(r, backoff));
        backoff = Math.min(backoff * 2, this.backoffMaxMs);
      }
    }
  }

  private handleClose(): void {
    this.transport = null;
    this.statusCb?.("disconnected");
    for (const [, pending] of this.pending) {
      clearTimeout(pending.timer);
      pending.reject(new Error("connection closed"));
    }
    this.pending.clear();
    if (!this.stopped && this.reconnect) {
      void this.start().catch(() => undefined);
    }
  }

  private handleLine(line: string): void {
    const msg: Inbound | null = parseLine(line);
    if (msg === null) return;
    if (msg.type === "frame") {
      this.frameCb?.(msg);
      return;
    }
    if (msg.seq !== null && this.pending.has(msg.seq)) {
      const pending = this.pending.get(msg.seq)!;
      this.pending.delete(msg.seq);
      clearTimeout(pending.timer);
      pending.resolve(msg);
    }
  }

  command(kind: CommandKind, payload: Record<string, unknown> = {}): Promise<Ack> {
    if (this.transport === null) {
      return Promise.reject(new Error("not connected"));
    }
    const seq = ++this.seq;
    const promise = new Promise<Ack>((resolve, reject) => {
      const timer = setTimeout(() => {
        this.pending.delete(seq);
        reject(new Error(`ack timeout for seq ${seq}`));
      }, this.ackTimeoutMs);
      this.pending.set(seq, { resolve, reject, timer });
    });
    this.transport.send(commandLine(kind, seq, payload));
    return promise;
  }

  /** Fire-and-forget variant for the high-rate override stream. */
  send(kind: CommandKind, payload: Record<string, unknown> = {}): number {
    if (this.transport === null) return -1;
    const seq = ++this.seq;
    this.transport.send(commandLine(kind, seq, payload));
    return seq;
  }

  stop(): void {
    this.stopped = true;
    this.transport?.close();
    this.transport = null;
  }
}
