/** Orbit camera: (azimuth, elevation, distance, fov) around the unit cube. */

import type { CameraSpec } from "./api.js";

export interface OrbitState {
  azimuthDeg: number;
  elevationDeg: number;
  distance: number;
  fovDeg: number;
}

export const DEFAULT_ORBIT: OrbitState = {
  azimuthDeg: 35,
  elevationDeg: 25,
  distance: 2.4,
  fovDeg: 40,
};

const CENTER = [0.5, 0.5, 0.5];
const MAX_ELEVATION = 89;

export function clampOrbit(orbit: OrbitState): OrbitState {
  return {
    azimuthDeg: ((orbit.azimuthDeg % 360) + 360) % 360,
    elevationDeg: Math.max(-MAX_ELEVATION,
                           Math.min(MAX_ELEVATION, orbit.elevationDeg)),
    distance: Math.max(1.05, Math.min(8, orbit.distance)),
    fovDeg: Math.max(10, Math.min(120, orbit.fovDeg)),
  };
}

/** Eye/look-at/up for the service, looking at the cube center. */
export function orbitToCamera(orbit: OrbitState, width: number,
                              height: number): CameraSpec {
  const clamped = clampOrbit(orbit);
  const az = (clamped.azimuthDeg * Math.PI) / 180;
  const el = (clamped.elevationDeg * Math.PI) / 180;
  const eye = [
    CENTER[0] + clamped.distance * Math.cos(el) * Math.cos(az),
    CENTER[1] + clamped.distance * Math.cos(el) * Math.sin(az),
    CENTER[2] + clamped.distance * Math.sin(el),
  ];
  return {
    eye,
    look_at: [...CENTER],
    up: [0, 0, 1],
    vfov_deg: clamped.fovDeg,
    width,
    height,
  };
}

/** The viewing-sphere direction the orbit corresponds to (unit vector). */
export function orbitViewpoint(orbit: OrbitState): number[] {
  const camera = orbitToCamera(orbit, 1, 1);
  const v = camera.eye.map((e, i) => e - CENTER[i]);
  const norm = Math.hypot(...v);
  return v.map((x) => x / norm);
}
