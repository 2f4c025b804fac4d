/**
 * Browser entry: connect to the session, render the stream, and translate
 * mouse input into 6D target poses.
 *
 * Controls: click a body vertex to grab it; drag to translate on the
 * screen-parallel plane; scroll to move the drag plane along the view ray;
 * shift-drag to rotate about the view-up axis; Escape (or the button)
 * releases; right-drag orbits the camera.
 */

import { Camera, dolly, orbit } from "./camera.js";
import { SessionClient } from "./client.js";
import { renderFrame } from "./renderer.js";
import { ViewState } from "./viewstate.js";

function boot(): void {
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const statusEl = document.getElementById("status") as HTMLElement;
  const urlInput = document.getElementById("url") as HTMLInputElement;
  const connectBtn = document.getElementById("connect") as HTMLButtonElement;
  const detachBtn = document.getElementById("detach") as HTMLButtonElement;
  const ctx = canvas.getContext("2d")!;

  const camera: Camera = {
    eye: [0.25, -0.3, 0.25],
    target: [0, 0, 0.12],
    up: [0, 0, 1],
    fovY: (45 * Math.PI) / 180,
    width: canvas.width,
    height: canvas.height,
  };
  const state = new ViewState(camera);
  let client: SessionClient | null = null;
  let grabbedBody: string | null = null;
  let dragging = false;
  let lastX = 0;
  let orbiting = false;

  function connect(): void {
    const ws = new WebSocket(urlInput.value);
    client = new SessionClient(ws, {
      onScene: (frame) => {
        for (const b of frame.bodies) {
          state.sceneTriangles.set(b.name, b.triangles);
        }
      },
      onState: (frame) => {
        state.onState(frame);
      },
      onError: (code, message) => {
        state.lastError = `${code}: ${message}`;
        statusEl.textContent = `server error ${code}`;
      },
      onReject: (reason) => {
        state.lastError = `bad frame: ${reason}`;
      },
      onClose: () => {
        statusEl.textContent = "disconnected";
        client = null;
      },
    });
    ws.addEventListener("open", () => {
      statusEl.textContent = `connected to ${urlInput.value}`;
    });
  }

  connectBtn.addEventListener("click", connect);
  detachBtn.addEventListener("click", () => {
    client?.detach();
    state.endAttach();
    grabbedBody = null;
  });

  canvas.addEventListener("mousedown", (ev) => {
    if (ev.button === 2) {
      orbiting = true;
      lastX = ev.offsetX;
      return;
    }
    if (client === null || state.snapshot === null) return;
    if (state.attach === null) {
      const pick = state.pickVertex(ev.offsetX, ev.offsetY);
      if (pick !== null) {
        const body = state.snapshot.bodies.find((b) => b.name === pick.body);
        if (body) {
          client.attach(pick.body, pick.point);
          state.beginAttach(pick.body, pick.point, body.pose.orientation);
          grabbedBody = pick.body;
          statusEl.textContent = `grabbed ${pick.body}`;
        }
      }
    }
    dragging = true;
    lastX = ev.offsetX;
  });

  canvas.addEventListener("mousemove", (ev) => {
    if (orbiting) {
      state.camera = orbit(state.camera, -(ev.offsetX - lastX) * 0.01, 0);
      lastX = ev.offsetX;
      return;
    }
    if (!dragging || client === null || state.attach === null) return;
    const target = state.pointerToTarget(
      ev.offsetX,
      ev.offsetY,
      ev.shiftKey,
      ev.offsetX - lastX
    );
    lastX = ev.offsetX;
    if (target !== null) {
      client.setTarget(target.position, target.orientation);
    }
  });

  window.addEventListener("mouseup", () => {
    dragging = false;
    orbiting = false;
  });
  canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    if (state.attach !== null) {
      state.adjustDepth(-ev.deltaY * 1e-4);
      const target = state.pointerToTarget(ev.offsetX, ev.offsetY);
      if (target !== null && client !== null) {
        client.setTarget(target.position, target.orientation);
      }
    } else {
      state.camera = dolly(state.camera, ev.deltaY > 0 ? 1.1 : 0.9);
    }
  });
  window.addEventListener("keydown", (ev) => {
    if (ev.key === "Escape" && client !== null) {
      client.detach();
      state.endAttach();
      grabbedBody = null;
    }
  });

  function tick(): void {
    client?.flush(); // at most one target message per display frame
    renderFrame(ctx as never, state);
    requestAnimationFrame(tick);
  }
  requestAnimationFrame(tick);
  void grabbedBody;
}

boot();
