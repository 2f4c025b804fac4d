/**
 * Wire protocol of the simulation session (JSON text frames).
 *
 * Decoding is total: a frame either parses into a typed message or is
 * rejected with a reason; nothing renders from a partially valid frame.
 * Units are SI (meters, seconds, newtons); orientations are [w, x, y, z].
 */

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number];

export interface Pose {
  position: Vec3;
  orientation: Quat;
}

export interface BodyState {
  name: string;
  pose: Pose;
  vertices: Vec3[];
}

export interface ContactState {
  p: Vec3;
  n: Vec3;
  f: Vec3;
  status: "separated" | "stick" | "slip";
}

export interface StateFrame {
  type: "state";
  step: number;
  time: number;
  bodies: BodyState[];
  contacts: ContactState[];
  coupling_wrench: number[];
}

export interface ErrorFrame {
  type: "error";
  code: string;
  message: string;
}

/** One-time topology extension sent on connect (static per scenario). */
export interface SceneFrame {
  type: "scene";
  bodies: { name: string; triangles: [number, number, number][] }[];
}

export type ServerFrame = StateFrame | ErrorFrame | SceneFrame;

export interface AttachMessage {
  type: "attach";
  body: string;
  grab_point: Vec3;
}

export interface TargetMessage {
  type: "target";
  position: Vec3;
  orientation: Quat;
}

export interface DetachMessage {
  type: "detach";
}

export type ClientMessage = AttachMessage | TargetMessage | DetachMessage;

export type DecodeResult =
  | { ok: true; frame: ServerFrame }
  | { ok: false; reason: string };

function isFiniteNumber(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function isVec3(x: unknown): x is Vec3 {
  return Array.isArray(x) && x.length === 3 && x.every(isFiniteNumber);
}

function isQuat(x: unknown): x is Quat {
  return Array.isArray(x) && x.length === 4 && x.every(isFiniteNumber);
}

function isPose(x: unknown): x is Pose {
  const p = x as Pose;
  return (
    typeof x === "object" && x !== null &&
    isVec3(p.position) && isQuat(p.orientation)
  );
}

function isBody(x: unknown): x is BodyState {
  const b = x as BodyState;
  return (
    typeof x === "object" && x !== null &&
    typeof b.name === "string" &&
    isPose(b.pose) &&
    Array.isArray(b.vertices) && b.vertices.every(isVec3)
  );
}

const STATUSES = new Set(["separated", "stick", "slip"]);

function isContact(x: unknown): x is ContactState {
  const c = x as ContactState;
  return (
    typeof x === "object" && x !== null &&
    isVec3(c.p) && isVec3(c.n) && isVec3(c.f) &&
    typeof c.status === "string" && STATUSES.has(c.status)
  );
}

export function decodeFrame(raw: string): DecodeResult {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return { ok: false, reason: "not JSON" };
  }
  if (typeof data !== "object" || data === null) {
    return { ok: false, reason: "frame must be an object" };
  }
  const obj = data as Record<string, unknown>;
  switch (obj.type) {
    case "error": {
      if (typeof obj.code !== "string" || typeof obj.message !== "string") {
        return { ok: false, reason: "malformed error frame" };
      }
      return { ok: true, frame: obj as unknown as ErrorFrame };
    }
    case "scene": {
      const bodies = obj.bodies;
      if (
        !Array.isArray(bodies) ||
        !bodies.every(
          (b) =>
            typeof b === "object" && b !== null &&
            typeof (b as { name: unknown }).name === "string" &&
            Array.isArray((b as { triangles: unknown }).triangles)
        )
      ) {
        return { ok: false, reason: "malformed scene frame" };
      }
      return { ok: true, frame: obj as unknown as SceneFrame };
    }
    case "state": {
      if (!isFiniteNumber(obj.step) || !isFiniteNumber(obj.time)) {
        return { ok: false, reason: "state frame missing step/time" };
      }
      if (!Array.isArray(obj.bodies) || !obj.bodies.every(isBody)) {
        return { ok: false, reason: "state frame has malformed bodies" };
      }
      if (!Array.isArray(obj.contacts) || !obj.contacts.every(isContact)) {
        return { ok: false, reason: "state frame has malformed contacts" };
      }
      const w = obj.coupling_wrench;
      if (!Array.isArray(w) || w.length !== 6 || !w.every(isFiniteNumber)) {
        return { ok: false, reason: "state frame has malformed wrench" };
      }
      return { ok: true, frame: obj as unknown as StateFrame };
    }
    default:
      return { ok: false, reason: `unknown frame type ${String(obj.type)}` };
  }
}

export function encodeAttach(body: string, grabPoint: Vec3): string {
  return JSON.stringify({ type: "attach", body, grab_point: grabPoint });
}

export function encodeTarget(position: Vec3, orientation: Quat): string {
  return JSON.stringify({ type: "target", position, orientation });
}

export function encodeDetach(): string {
  return JSON.stringify({ type: "detach" });
}
