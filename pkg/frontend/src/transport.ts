/**
 * Line transports. The browser uses the WebSocket flavor through the
 * bridge; tests and the bridge itself talk TCP to the simulator directly.
 */

export interface LineTransport {
  connect(): Promise<void>;
  send(line: string): void;
  close(): void;
  onLine(cb: (line: string) => void): void;
  onClose(cb: () => void): void;
}

export class TcpLineTransport implements LineTransport {
  private socket: import("node:net").Socket | null = null;
  private lineCb: ((line: string) => void) | null = null;
  private closeCb: (() => void) | null = null;

  constructor(private host: string, private port: number) {}

  async connect(): Promise<void> {
    const net = await import("node:net");
    const { LineSplitter } = await import("./protocol.js");
    await new Promise<void>((resolve, reject) => {
      const socket = net.createConnection({ host: this.host, port: this.port });
      const splitter = new LineSplitter();
      socket.setEncoding("utf-8");
      socket.once("connect", () => {
        this.socket = socket;
        resolve();
      });
      socket.once("error", (err) => {
        if (this.socket === null) reject(err);
        else this.closeCb?.();
      });
      socket.on("data", (chunk: string) => {
        for (const line of splitter.push(chunk)) this.lineCb?.(line);
      });
      socket.on("close", () => this.closeCb?.());
    });
  }

  send(line: string): void {
    this.socket?.write(line + "\n");
  }

  close(): void {
    this.socket?.destroy();
    this.socket = null;
  }

  onLine(cb: (line: string) => void): void {
    this.lineCb = cb;
  }

  onClose(cb: () => void): void {
    this.closeCb = cb;
  }
}

type BrowserWebSocket = {
  onopen: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  send(data: string): void;
  close(): void;
};

async function resolveWebSocket(): Promise<new (url: string) => BrowserWebSocket> {
  const existing = (globalThis as Record<string, unknown>).WebSocket;
  if (typeof existing === "function") {
    return existing as new (url: string) => BrowserWebSocket;
  }
  // Node test environment: the ws package implements the same surface
  const mod = await import("ws");
  return mod.WebSocket as unknown as new (url: string) => BrowserWebSocket;
}

/** Browser-side transport; expects the bridge to relay NDJSON verbatim. */
export class WebSocketLineTransport implements LineTransport {
  private ws: BrowserWebSocket | null = null;
  private lineCb: ((line: string) => void) | null = null;
  private closeCb: (() => void) | null = null;

  constructor(private url: string) {}

  async connect(): Promise<void> {
    const Ctor = await resolveWebSocket();
    return new Promise((resolve, reject) => {
      const ws = new Ctor(this.url);
      ws.onopen = () => {
        this.ws = ws;
        resolve();
      };
      ws.onerror = () => {
        if (this.ws === null) reject(new Error(`cannot reach ${this.url}`));
      };
      ws.onmessage = (ev) => {
        for (const line of String(ev.data).split("\n")) {
          if (line.trim()) this.lineCb?.(line);
        }
      };
      ws.onclose = () => this.closeCb?.();
    });
  }

  send(line: string): void {
    this.ws?.send(line + "\n");
  }

  close(): void {
    this.ws?.close();
    this.ws = null;
  }

  onLine(cb: (line: string) => void): void {
    this.lineCb = cb;
  }

  onClose(cb: () => void): void {
    this.closeCb = cb;
  }
}
