/**
 * Canvas-2D scene renderer: painter-sorted filled triangles from the
 * streamed vertices, force arrows colored by contact status, the coupling
 * wrench at the grab point, and a HUD. Draws only complete frames.
 */

import { Camera, cross, dot, normalize, project, sub } from "./camera.js";
import { ContactState, StateFrame, Vec3 } from "./protocol.js";
import { ViewState } from "./viewstate.js";

export const STATUS_COLORS: Record<ContactState["status"], string> = {
  separated: "#9e9e9e",
  stick: "#2e9e44",
  slip: "#d43c3c",
};

const BODY_COLORS = ["#6f8fc9", "#c9a66f", "#8fc96f", "#c96fb8"];

interface Ctx2D {
  canvas: { width: number; height: number };
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillText(t: string, x: number, y: number): void;
}

export interface RenderStats {
  triangles: number;
  arrows: number;
  skipped: boolean;
}

export function renderFrame(
  ctx: Ctx2D,
  state: ViewState,
  frame: StateFrame | null = null
): RenderStats {
  const cam = state.camera;
  ctx.clearRect(0, 0, cam.width, cam.height);
  ctx.fillStyle = "#151821";
  ctx.fillRect(0, 0, cam.width, cam.height);
  const snap = frame ?? state.snapshot;
  const stats: RenderStats = { triangles: 0, arrows: 0, skipped: false };
  if (snap === null) {
    drawHud(ctx, state, null);
    stats.skipped = true;
    return stats;
  }

  // gather world triangles with depth for painter sorting
  type Tri = { pts: [Vec3, Vec3, Vec3]; depth: number; shade: number; color: string };
  const tris: Tri[] = [];
  snap.bodies.forEach((body, bi) => {
    const topo = state.sceneTriangles.get(body.name);
    if (!topo) return;
    const color = BODY_COLORS[bi % BODY_COLORS.length];
    for (const [i, j, k] of topo) {
      const a = body.vertices[i];
      const b = body.vertices[j];
      const c = body.vertices[k];
      if (!a || !b || !c) return; // inconsistent topology: skip body
      const n = normalize(cross(sub(b, a), sub(c, a)));
      const view = normalize(sub(cam.eye, a));
      const facing = dot(n, view);
      if (facing <= 0) continue; // back face
      const depth =
        (dot(sub(a, cam.eye), cameraForward(cam)) +
          dot(sub(b, cam.eye), cameraForward(cam)) +
          dot(sub(c, cam.eye), cameraForward(cam))) / 3;
      tris.push({ pts: [a, b, c], depth, shade: 0.4 + 0.6 * facing, color });
    }
  });
  tris.sort((t1, t2) => t2.depth - t1.depth);
  for (const t of tris) {
    const p0 = project(cam, t.pts[0]);
    const p1 = project(cam, t.pts[1]);
    const p2 = project(cam, t.pts[2]);
    if (!p0 || !p1 || !p2) continue;
    ctx.beginPath();
    ctx.moveTo(p0.x, p0.y);
    ctx.lineTo(p1.x, p1.y);
    ctx.lineTo(p2.x, p2.y);
    ctx.closePath();
    ctx.fillStyle = shadeColor(t.color, t.shade);
    ctx.fill();
    stats.triangles += 1;
  }

  for (const c of snap.contacts) {
    drawArrow(ctx, cam, c.p, scaleVec(c.f, state.forceScale),
              STATUS_COLORS[c.status]);
    stats.arrows += 1;
  }
  if (state.attach !== null) {
    const w = snap.coupling_wrench;
    drawArrow(
      ctx, cam, state.attach.grabPoint,
      scaleVec([w[0], w[1], w[2]], state.forceScale), "#f2d24b"
    );
    stats.arrows += 1;
  }
  drawHud(ctx, state, snap);
  return stats;
}

function cameraForward(cam: Camera): Vec3 {
  return normalize(sub(cam.target, cam.eye));
}

function scaleVec(v: Vec3 | number[], s: number): Vec3 {
  return [v[0] * s, v[1] * s, v[2] * s];
}

function shadeColor(hex: string, f: number): string {
  const r = Math.round(parseInt(hex.slice(1, 3), 16) * f);
  const g = Math.round(parseInt(hex.slice(3, 5), 16) * f);
  const b = Math.round(parseInt(hex.slice(5, 7), 16) * f);
  return `rgb(${r},${g},${b})`;
}

function drawArrow(ctx: Ctx2D, cam: Camera, base: Vec3, vec: Vec3,
                   color: string): void {
  const tip: Vec3 = [base[0] + vec[0], base[1] + vec[1], base[2] + vec[2]];
  const p0 = project(cam, base);
  const p1 = project(cam, tip);
  if (!p0 || !p1) return;
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(p0.x, p0.y);
  ctx.lineTo(p1.x, p1.y);
  ctx.stroke();
  // arrow head
  const dx = p1.x - p0.x;
  const dy = p1.y - p0.y;
  const len = Math.hypot(dx, dy);
  if (len < 1e-9) return;
  const ux = dx / len;
  const uy = dy / len;
  const s = Math.min(8, len / 3);
  ctx.beginPath();
  ctx.moveTo(p1.x, p1.y);
  ctx.lineTo(p1.x - s * (ux + 0.5 * uy), p1.y - s * (uy - 0.5 * ux));
  ctx.lineTo(p1.x - s * (ux - 0.5 * uy), p1.y - s * (uy + 0.5 * ux));
  ctx.closePath();
  ctx.fillStyle = color;
  ctx.fill();
}

function drawHud(ctx: Ctx2D, state: ViewState, snap: StateFrame | null): void {
  ctx.fillStyle = "#dfe3ec";
  ctx.font = "12px monospace";
  if (snap === null) {
    ctx.fillText("waiting for stream...", 12, 20);
  } else {
    const wrench = snap.coupling_wrench;
    const f = Math.hypot(wrench[0], wrench[1], wrench[2]).toFixed(2);
    ctx.fillText(
      `step ${snap.step}  t=${snap.time.toFixed(3)}s  ` +
        `contacts ${snap.contacts.length}  |F|=${f} N  ` +
        (state.attach ? `grab: ${state.attach.body}` : "free (click grabs)"),
      12, 20
    );
    ctx.fillText(
      "legend: green=stick red=slip gray=separated yellow=coupling",
      12, 36
    );
  }
  if (state.lastError !== null) {
    ctx.fillStyle = "#ff7070";
    ctx.fillText(`error: ${state.lastError}`, 12, 52);
  }
}
