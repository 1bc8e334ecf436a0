/** UI session state: sliders, transfer-function control points, camera.
 *
 * Everything here is reconstructible from /meta plus user inputs; there
 * is no hidden server-side session.
 */

import type { Meta, TransferFunctionSpec } from "./api.js";
import { DEFAULT_ORBIT, OrbitState } from "./camera.js";

export interface TfPoint {
  position: number;
  rgba: [number, number, number, number];
}

export const DEFAULT_TF_POINTS: TfPoint[] = [
  { position: 0.0, rgba: [0.1, 0.1, 0.6, 0.0] },
  { position: 0.35, rgba: [0.2, 0.6, 0.9, 0.02] },
  { position: 0.65, rgba: [0.9, 0.7, 0.2, 0.3] },
  { position: 1.0, rgba: [1.0, 0.2, 0.1, 0.95] },
];

export class Session {
  values: number[];
  extrapolate = false;
  orbit: OrbitState = { ...DEFAULT_ORBIT };
  tfPoints: TfPoint[];

  constructor(readonly meta: Meta) {
    this.values = meta.parameters.map((p) => (p.min + p.max) / 2);
    this.tfPoints = DEFAULT_TF_POINTS.map((p) => ({
      position: p.position,
      rgba: [...p.rgba] as [number, number, number, number],
    }));
  }

  /** Set one slider; values clamp to the range unless extrapolating. */
  setValue(index: number, value: number): void {
    const info = this.meta.parameters[index];
    this.values[index] = this.extrapolate
      ? value
      : Math.min(info.max, Math.max(info.min, value));
  }

  outOfRangeNames(): string[] {
    return this.meta.parameters
      .filter((p, i) => this.values[i] < p.min || this.values[i] > p.max)
      .map((p) => p.name);
  }

  // -- transfer-function editing -------------------------------------------

  /** Insert a control point, keeping positions sorted and in (0, 1). */
  addTfPoint(position: number,
             rgba: [number, number, number, number]): number {
    const p = Math.min(0.999, Math.max(0.001, position));
    const index = this.tfPoints.findIndex((pt) => pt.position > p);
    const at = index === -1 ? this.tfPoints.length - 1 : index;
    this.tfPoints.splice(at, 0, { position: p, rgba: [...rgba] });
    return at;
  }

  /** Move a point; endpoints stay pinned to 0 and 1, interiors stay ordered. */
  moveTfPoint(index: number, position: number, alpha: number): void {
    const point = this.tfPoints[index];
    point.rgba[3] = Math.min(1, Math.max(0, alpha));
    if (index === 0 || index === this.tfPoints.length - 1) return;
    const lo = this.tfPoints[index - 1].position + 1e-4;
    const hi = this.tfPoints[index + 1].position - 1e-4;
    point.position = Math.min(hi, Math.max(lo, position));
  }

  removeTfPoint(index: number): boolean {
    if (index <= 0 || index >= this.tfPoints.length - 1) return false;
    this.tfPoints.splice(index, 1);
    return true;
  }

  setTfColor(index: number, r: number, g: number, b: number): void {
    const rgba = this.tfPoints[index].rgba;
    rgba[0] = r;
    rgba[1] = g;
    rgba[2] = b;
  }

  tfSpec(): TransferFunctionSpec {
    return {
      points: this.tfPoints.map((p) => ({
        position: p.position,
        rgba: [...p.rgba] as [number, number, number, number],
      })),
    };
  }
}
