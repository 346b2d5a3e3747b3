/**
 * Front-plane gaze math, mirroring the server's conventions.
 *
 * The UI never does more geometry than this pair: a gaze (pitch, yaw) in
 * radians projects onto the front plane at face radius r as
 *   u = -r * sin(yaw) * cos(pitch),  v = -r * sin(pitch)
 * and the unprojection takes the camera-facing branch. Everything else
 * (top/side planes, sensitivities) lives server-side.
 */

export interface PlanePoint {
  u: number;
  v: number;
}

export interface Angles {
  pitchRad: number;
  yawRad: number;
}

export const DEG = Math.PI / 180;

export function degToRad(deg: number): number {
  return deg * DEG;
}

export function radToDeg(rad: number): number {
  return rad / DEG;
}

export function frontProject(pitchRad: number, yawRad: number, r: number): PlanePoint {
  if (r <= 0) throw new Error(`radius must be positive, got ${r}`);
  return {
    u: -r * Math.sin(yawRad) * Math.cos(pitchRad),
    v: -r * Math.sin(pitchRad),
  };
}

/** Inverse of frontProject on the open disc u^2 + v^2 < r^2. */
export function frontUnproject(u: number, v: number, r: number): Angles {
  if (r <= 0) throw new Error(`radius must be positive, got ${r}`);
  if (Math.abs(v) >= r) throw new Error("point outside the projection disc (|v| >= r)");
  const pitchRad = -Math.asin(v / r);
  const limit = r * Math.cos(pitchRad);
  if (Math.abs(u) >= limit) throw new Error("point outside the projection disc");
  return { pitchRad, yawRad: Math.asin(-u / limit) };
}

/** Pull a dragged point radially inside the disc (default 0.99 r). */
export function clampToDisc(u: number, v: number, r: number, frac = 0.99): PlanePoint {
  const limit = r * frac;
  const rho = Math.hypot(u, v);
  if (rho <= limit || rho === 0) return { u, v };
  const s = limit / rho;
  return { u: u * s, v: v * s };
}

/** One keyboard nudge: a fixed-degree step, reversible by the opposite key. */
export function nudgeDeg(valueDeg: number, direction: 1 | -1, stepDeg = 1): number {
  return valueDeg + direction * stepDeg;
}
