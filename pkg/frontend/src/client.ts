/**
 * Session client: typed frames over any WebSocket-like transport, target
 * messages throttled to the display rate, latest-state-wins delivery.
 */

import {
  ClientMessage,
  Quat,
  ServerFrame,
  StateFrame,
  Vec3,
  decodeFrame,
  encodeAttach,
  encodeDetach,
  encodeTarget,
} from "./protocol.js";

/** Minimal transport surface shared by browser WebSocket and `ws`. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(
    type: "message" | "open" | "close" | "error",
    listener: (event: { data?: unknown }) => void
  ): void;
}

export interface ClientEvents {
  onState?: (frame: StateFrame) => void;
  onScene?: (frame: Extract<ServerFrame, { type: "scene" }>) => void;
  onError?: (code: string, message: string) => void;
  onReject?: (reason: string) => void;
  onClose?: () => void;
}

export class SessionClient {
  private socket: SocketLike;
  private events: ClientEvents;
  private pendingTarget: { position: Vec3; orientation: Quat } | null = null;
  latest: StateFrame | null = null;

  constructor(socket: SocketLike, events: ClientEvents = {}) {
    this.socket = socket;
    this.events = events;
    socket.addEventListener("message", (ev) => {
      this.handleRaw(String(ev.data));
    });
    socket.addEventListener("close", () => this.events.onClose?.());
  }

  handleRaw(raw: string): void {
    const result = decodeFrame(raw);
    if (!result.ok) {
      this.events.onReject?.(result.reason);
      return;
    }
    const frame = result.frame;
    if (frame.type === "state") {
      if (this.latest === null || frame.step >= this.latest.step) {
        this.latest = frame;
        this.events.onState?.(frame);
      }
    } else if (frame.type === "error") {
      this.events.onError?.(frame.code, frame.message);
    } else {
      this.events.onScene?.(frame);
    }
  }

  attach(body: string, grabPoint: Vec3): void {
    this.socket.send(encodeAttach(body, grabPoint));
  }

  detach(): void {
    this.socket.send(encodeDetach());
  }

  /** Queue a target; flush() sends at most one per display frame. */
  setTarget(position: Vec3, orientation: Quat): void {
    this.pendingTarget = { position, orientation };
  }

  flush(): boolean {
    if (this.pendingTarget === null) return false;
    const t = this.pendingTarget;
    this.pendingTarget = null;
    this.socket.send(encodeTarget(t.position, t.orientation));
    return true;
  }

  send(message: ClientMessage): void {
    this.socket.send(JSON.stringify(message));
  }

  close(): void {
    this.socket.close();
  }
}
