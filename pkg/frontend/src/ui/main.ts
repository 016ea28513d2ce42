/**
 * Browser ground station: canvas field view in local meters, mission
 * editing by clicking the field, live panels fed only by telemetry
 * frames, and a dead-man joystick for manual override.
 */

import { TelemetryClient } from "../client.js";
import { GcsSession } from "../session.js";
import { WebSocketLineTransport } from "../transport.js";

const FIELD_M = 40; // meters shown per canvas side

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function fmt(n: number | undefined, digits = 1): string {
  return n === undefined ? "-" : n.toFixed(digits);
}

function main(): void {
  const canvas = el<HTMLCanvasElement>("field");
  const ctx = canvas.getContext("2d")!;
  const scale = canvas.width / FIELD_M;
  const toPx = (x: number, y: number): [number, number] => [x * scale, canvas.height - y * scale];
  const toField = (px: number, py: number): [number, number] => [
    px / scale,
    (canvas.height - py) / scale,
  ];

  let session: GcsSession | null = null;
  const trail: Array<[number, number]> = [];

  function render(): void {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.strokeStyle = "#2a3942";
    ctx.lineWidth = 1;
    for (let m = 0; m <= FIELD_M; m += 5) {
      const [gx] = toPx(m, 0);
      ctx.beginPath();
      ctx.moveTo(gx, 0);
      ctx.lineTo(gx, canvas.height);
      ctx.stroke();
      const [, gy] = toPx(0, m);
      ctx.beginPath();
      ctx.moveTo(0, gy);
      ctx.lineTo(canvas.width, gy);
      ctx.stroke();
    }
    if (!session) return;

    ctx.strokeStyle = "#3f6f4f";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    trail.forEach(([x, y], i) => {
      const [px, py] = toPx(x, y);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();

    const drawWaypoints = (wps: { x: number; y: number }[], color: string, filled: boolean) => {
      wps.forEach((wp, i) => {
        const [px, py] = toPx(wp.x, wp.y);
        ctx.beginPath();
        ctx.arc(px, py, 7, 0, Math.PI * 2);
        ctx.strokeStyle = color;
        ctx.lineWidth = 2;
        if (filled) {
          ctx.fillStyle = color + "55";
          ctx.fill();
        }
        ctx.stroke();
        ctx.fillStyle = color;
        ctx.font = "11px monospace";
        ctx.fillText(String(i + 1), px + 9, py - 9);
      });
    };
    if (session.authoritativeMission) drawWaypoints(session.authoritativeMission, "#58a6ff", true);
    drawWaypoints(session.draft, "#d29922", false);

    for (const cap of session.captures) {
      const [px, py] = toPx(cap.x, cap.y);
      ctx.fillStyle = "#2ea043";
      ctx.fillRect(px - 5, py - 4, 10, 8);
      ctx.fillStyle = "#a5d6ff";
      ctx.beginPath();
      ctx.arc(px, py, 2, 0, Math.PI * 2);
      ctx.fill();
    }

    const frame = session.latestFrame;
    if (frame) {
      const [px, py] = toPx(frame.x, frame.y);
      const h = ((90 - frame.heading_deg) * Math.PI) / 180; // canvas angle
      ctx.fillStyle = frame.armed ? "#f85149" : "#8b949e";
      ctx.beginPath();
      ctx.arc(px, py, 6, 0, Math.PI * 2);
      ctx.fill();
      ctx.strokeStyle = "#f0f6fc";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(px, py);
      const rad = (frame.heading_deg * Math.PI) / 180;
      ctx.lineTo(px + 14 * Math.cos(rad), py - 14 * Math.sin(rad));
      ctx.stroke();
      void h;
    }
  }

  function renderPanels(): void {
    if (!session) return;
    const f = session.latestFrame;
    el("status").textContent = session.status;
    el("banner").style.display = session.status === "stale" ? "block" : "none";
    if (session.lastFrameAt !== null) {
      el("last-seen").textContent = new Date(session.lastFrameAt).toLocaleTimeString();
    }
    el("mode").textContent = f?.mode ?? "-";
    el("armed").textContent = f ? String(f.armed) : "-";
    el("speed").textContent = fmt(f?.ground_speed, 2);
    el("dist").textContent = fmt(f?.distance_to_waypoint, 1);
    el("next-wp").textContent = f ? String(f.next_waypoint) : "-";
    el("battery").textContent = fmt(f?.battery_v, 1);
    el("fix").textContent = f?.fix_type ?? "-";
    el("led").textContent = f?.led ?? "-";
    el("captures").textContent = String(session.captures.length);
    el("error").textContent = session.lastError ?? "";
    const hist = session.history.slice(-8).reverse();
    el("history").innerHTML = hist
      .map((h) => `<li>${h.kind} #${h.seq}: ${h.status}${h.reason ? " (" + h.reason + ")" : ""}</li>`)
      .join("");
    renderDraftTable();
  }

  function renderDraftTable(): void {
    if (!session) return;
    const rows = session.draft
      .map(
        (wp, i) => `
      <tr data-i="${i}">
        <td>${i + 1}</td>
        <td>${wp.x.toFixed(1)}, ${wp.y.toFixed(1)}</td>
        <td><input class="wp-speed" data-i="${i}" type="number" step="0.5" min="0.5" value="${wp.speed}"></td>
        <td><input class="wp-radius" data-i="${i}" type="number" step="0.5" min="0.5" value="${wp.acceptance_radius}"></td>
        <td><input class="wp-cam" data-i="${i}" type="checkbox" ${wp.trigger_camera ? "checked" : ""}></td>
        <td><button class="wp-del" data-i="${i}">x</button></td>
      </tr>`,
      )
      .join("");
    el("waypoints").innerHTML = rows;
    document.querySelectorAll<HTMLInputElement>(".wp-speed").forEach((input) => {
      input.onchange = () => session!.updateWaypoint(Number(input.dataset.i), { speed: Number(input.value) });
    });
    document.querySelectorAll<HTMLInputElement>(".wp-radius").forEach((input) => {
      input.onchange = () =>
        session!.updateWaypoint(Number(input.dataset.i), { acceptance_radius: Number(input.value) });
    });
    document.querySelectorAll<HTMLInputElement>(".wp-cam").forEach((input) => {
      input.onchange = () =>
        session!.updateWaypoint(Number(input.dataset.i), { trigger_camera: input.checked });
    });
    document.querySelectorAll<HTMLButtonElement>(".wp-del").forEach((button) => {
      button.onclick = () => session!.removeWaypoint(Number(button.dataset.i));
    });
  }

  el<HTMLButtonElement>("connect").onclick = async () => {
    const url = el<HTMLInputElement>("endpoint").value;
    session?.close();
    const client = new TelemetryClient(() => new WebSocketLineTransport(url));
    session = new GcsSession(client);
    session.onChange(renderPanels);
    trail.length = 0;
    await client.start();
  };

  canvas.onclick = (ev) => {
    if (!session) return;
    const rect = canvas.getBoundingClientRect();
    const [x, y] = toField(ev.clientX - rect.left, ev.clientY - rect.top);
    session.addWaypoint(Number(x.toFixed(1)), Number(y.toFixed(1)));
  };

  const hookButton = (id: string, run: () => Promise<unknown> | void) => {
    el<HTMLButtonElement>(id).onclick = () => {
      void Promise.resolve(run()).catch(() => undefined);
    };
  };
  hookButton("upload", () => session?.uploadMission());
  hookButton("clear-draft", () => session?.clearDraft());
  hookButton("arm", () => session?.arm());
  hookButton("disarm", () => session?.disarm());
  hookButton("start", () => session?.startMission());
  hookButton("hold", () => session?.hold());
  hookButton("resume", () => session?.resume());

  const pad = el<HTMLDivElement>("joystick");
  const engage = (ev: PointerEvent) => {
    if (!session) return;
    const rect = pad.getBoundingClientRect();
    const steer = -(((ev.clientX - rect.left) / rect.width) * 2 - 1);
    const throttle = -(((ev.clientY - rect.top) / rect.height) * 2 - 1);
    session.engageOverride(
      Math.max(-1, Math.min(1, throttle)),
      Math.max(-1, Math.min(1, steer)),
    );
  };
  pad.onpointerdown = (ev) => {
    pad.setPointerCapture(ev.pointerId);
    engage(ev);
  };
  pad.onpointermove = (ev) => {
    if (ev.buttons > 0) engage(ev);
  };
  const release = () => session?.releaseOverride();
  pad.onpointerup = release;
  pad.onpointercancel = release;

  setInterval(() => {
    if (session) {
      const f = session.latestFrame;
      if (f && (trail.length === 0 || trail[trail.length - 1][0] !== f.x)) {
        trail.push([f.x, f.y]);
        if (trail.length > 4000) trail.shift();
      }
    }
    render();
    renderPanels();
  }, 100);
}

main();
