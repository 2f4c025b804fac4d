/**
 * Minimal perspective camera: world/screen projection and the inverse
 * unprojection onto a camera-parallel drag plane. Pure math, no DOM.
 */

import { Vec3 } from "./protocol.js";

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm(a: Vec3): number {
  return Math.sqrt(dot(a, a));
}

export function normalize(a: Vec3): Vec3 {
  const n = norm(a);
  return n > 0 ? scale(a, 1 / n) : [0, 0, 0];
}

export interface Camera {
  eye: Vec3;
  target: Vec3;
  up: Vec3;
  fovY: number; // radians
  width: number;
  height: number;
}

export interface Basis {
  forward: Vec3;
  right: Vec3;
  upv: Vec3;
}

export function cameraBasis(cam: Camera): Basis {
  const forward = normalize(sub(cam.target, cam.eye));
  const right = normalize(cross(forward, cam.up));
  const upv = cross(right, forward);
  return { forward, right, upv };
}

/**
 * World point to screen pixels plus view depth (null when behind the eye).
 */
export function project(
  cam: Camera,
  p: Vec3
): { x: number; y: number; depth: number } | null {
  const { forward, right, upv } = cameraBasis(cam);
  const rel = sub(p, cam.eye);
  const depth = dot(rel, forward);
  if (depth <= 1e-9) return null;
  const fy = cam.height / 2 / Math.tan(cam.fovY / 2);
  const x = cam.width / 2 + (dot(rel, right) / depth) * fy;
  const y = cam.height / 2 - (dot(rel, upv) / depth) * fy;
  return { x, y, depth };
}

/** Ray through a pixel, in world space. */
export function pixelRay(cam: Camera, px: number, py: number): {
  origin: Vec3;
  dir: Vec3;
} {
  const { forward, right, upv } = cameraBasis(cam);
  const fy = cam.height / 2 / Math.tan(cam.fovY / 2);
  const dir = normalize(
    add(
      forward,
      add(scale(right, (px - cam.width / 2) / fy),
          scale(upv, (cam.height / 2 - py) / fy))
    )
  );
  return { origin: cam.eye, dir };
}

/**
 * Pixel unprojected onto the plane through `anchor` with normal `normal`
 * (the drag plane is screen-parallel: normal = camera forward).
 */
export function unprojectToPlane(
  cam: Camera,
  px: number,
  py: number,
  anchor: Vec3,
  normal: Vec3
): Vec3 | null {
  const ray = pixelRay(cam, px, py);
  const denom = dot(ray.dir, normal);
  if (Math.abs(denom) < 1e-12) return null;
  const t = dot(sub(anchor, ray.origin), normal) / denom;
  if (t <= 0) return null;
  return add(ray.origin, scale(ray.dir, t));
}

export function orbit(cam: Camera, dyaw: number, dpitch: number): Camera {
  const rel = sub(cam.eye, cam.target);
  const r = norm(rel);
  let yaw = Math.atan2(rel[1], rel[0]);
  let pitch = Math.asin(Math.max(-1, Math.min(1, rel[2] / r)));
  yaw += dyaw;
  pitch = Math.max(-1.45, Math.min(1.45, pitch + dpitch));
  const eye: Vec3 = [
    cam.target[0] + r * Math.cos(pitch) * Math.cos(yaw),
    cam.target[1] + r * Math.cos(pitch) * Math.sin(yaw),
    cam.target[2] + r * Math.sin(pitch),
  ];
  return { ...cam, eye };
}

export function dolly(cam: Camera, factor: number): Camera {
  const rel = sub(cam.eye, cam.target);
  return { ...cam, eye: add(cam.target, scale(rel, factor)) };
}
