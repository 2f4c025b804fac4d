/**
 * Viewer state: latest snapshot (stale frames dropped), attach status, and
 * the pointer-to-target mapping that stands in for a 6-DOF device.
 *
 * Translation lives on the screen-parallel plane through the grab point
 * (depth adjusted by scroll along the view ray); a modifier turns
 * horizontal drags into rotation about the view-up axis. Orientation is
 * otherwise held from attach time, so the coupling lag the operator sees
 * is exactly the simulation's response.
 */

import {
  Camera,
  add,
  cameraBasis,
  norm,
  normalize,
  scale,
  sub,
  unprojectToPlane,
} from "./camera.js";
import { Quat, StateFrame, Vec3 } from "./protocol.js";

export function quatMul(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

export function quatFromAxisAngle(axis: Vec3, angle: number): Quat {
  const a = normalize(axis);
  const h = angle / 2;
  const s = Math.sin(h);
  return [Math.cos(h), a[0] * s, a[1] * s, a[2] * s];
}

export interface AttachState {
  body: string;
  grabPoint: Vec3;       // world anchor at attach time
  planeAnchor: Vec3;     // current drag-plane anchor (scroll moves it)
  orientation: Quat;     // held orientation (modified by rotate drags)
}

export class ViewState {
  camera: Camera;
  snapshot: StateFrame | null = null;
  sceneTriangles = new Map<string, [number, number, number][]>();
  attach: AttachState | null = null;
  forceScale = 0.02; // meters of arrow per newton
  lastError: string | null = null;

  constructor(camera: Camera) {
    this.camera = camera;
  }

  /** Keep only the newest snapshot; stale frames are dropped. */
  onState(frame: StateFrame): boolean {
    if (this.snapshot !== null && frame.step < this.snapshot.step) {
      return false;
    }
    this.snapshot = frame;
    return true;
  }

  beginAttach(body: string, grabPoint: Vec3, orientation: Quat): void {
    this.attach = {
      body,
      grabPoint,
      planeAnchor: [...grabPoint] as Vec3,
      orientation: [...orientation] as Quat,
    };
  }

  endAttach(): void {
    this.attach = null;
  }

  /**
   * Pointer position to a 6D target pose; null when detached or when the
   * pointer ray misses the drag plane.
   */
  pointerToTarget(
    px: number,
    py: number,
    rotateModifier = false,
    dxPixels = 0
  ): { position: Vec3; orientation: Quat } | null {
    if (this.attach === null) return null;
    const basis = cameraBasis(this.camera);
    if (rotateModifier) {
      // horizontal drag rotates about the view-up axis
      const gain = 0.01; // rad per pixel
      this.attach.orientation = quatMul(
        quatFromAxisAngle(basis.upv, dxPixels * gain),
        this.attach.orientation
      );
      return {
        position: this.attach.planeAnchor,
        orientation: this.attach.orientation,
      };
    }
    const hit = unprojectToPlane(
      this.camera,
      px,
      py,
      this.attach.planeAnchor,
      basis.forward
    );
    if (hit === null) return null;
    return { position: hit, orientation: this.attach.orientation };
  }

  /** Scroll moves the drag plane along the view ray. */
  adjustDepth(deltaMeters: number): void {
    if (this.attach === null) return;
    const basis = cameraBasis(this.camera);
    this.attach.planeAnchor = add(
      this.attach.planeAnchor,
      scale(basis.forward, deltaMeters)
    );
  }

  /** Nearest streamed vertex to a pixel (for grab picking). */
  pickVertex(
    px: number,
    py: number,
    maxPixels = 24
  ): { body: string; point: Vec3 } | null {
    if (this.snapshot === null) return null;
    let best: { body: string; point: Vec3; d: number } | null = null;
    for (const body of this.snapshot.bodies) {
      for (const v of body.vertices) {
        const proj = projectOrNull(this.camera, v);
        if (proj === null) continue;
        const d = Math.hypot(proj.x - px, proj.y - py);
        if (d <= maxPixels && (best === null || d < best.d)) {
          best = { body: body.name, point: v, d };
        }
      }
    }
    return best === null ? null : { body: best.body, point: best.point };
  }
}

import { project } from "./camera.js";

function projectOrNull(cam: Camera, p: Vec3) {
  return project(cam, p);
}

/** Static deflection bound of the coupling: offsets beyond f_max / k_t
 * saturate, so tracking error beyond it means something is wrong. */
export function trackingBound(fMax: number, kT: number): number {
  return fMax / kT;
}

export function trackingError(anchor: Vec3, target: Vec3): number {
  return norm(sub(anchor, target));
}
