/**
 * NDJSON-to-browser bridge: accepts WebSocket connections and relays lines
 * verbatim to/from the simulator's TCP telemetry endpoint. One TCP
 * connection per browser client, so per-connection command sequencing is
 * preserved end to end.
 */

import { WebSocketServer, WebSocket } from "ws";
import net from "node:net";
import { LineSplitter } from "./protocol.js";

export interface BridgeOptions {
  wsPort: number;
  simHost: string;
  simPort: number;
}

export interface BridgeHandle {
  port: number;
  close(): void;
}

export function startBridge(opts: BridgeOptions): Promise<BridgeHandle> {
  return new Promise((resolve, reject) => {
    const wss = new WebSocketServer({ port: opts.wsPort });
    wss.once("error", reject);
    wss.on("listening", () => {
      const address = wss.address();
      const port = typeof address === "object" && address !== null ? address.port : opts.wsPort;
      resolve({ port, close: () => wss.close() });
    });
    wss.on("connection", (ws: WebSocket) => {
      const upstream = net.createConnection({ host: opts.simHost, port: opts.simPort });
      const splitter = new LineSplitter();
      upstream.setEncoding("utf-8");
      upstream.on("data", (chunk: string) => {
        for (const line of splitter.push(chunk)) {
          if (ws.readyState === WebSocket.OPEN) ws.send(line);
        }
      });
      upstream.on("close", () => ws.close());
      upstream.on("error", () => ws.close());
      ws.on("message", (data) => {
        const text = data.toString();
        upstream.write(text.endsWith("\n") ? text : text + "\n");
      });
      ws.on("close", () => upstream.destroy());
    });
  });
}
