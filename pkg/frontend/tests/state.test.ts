import { describe, expect, it } from "vitest";

import type { Meta } from "../src/api.js";
import { Session } from "../src/state.js";

const META: Meta = {
  parameters: [
    { name: "amplitude", min: 0.5, max: 2.0 },
    { name: "separation", min: -1.0, max: 1.0 },
    { name: "inert", min: 0.0, max: 1.0 },
  ],
  image_extents: [256, 256],
  volume_extents: [64, 64, 64],
  normalization: { value_min: -0.1, value_max: 2.4 },
  config_hash: "abc",
  checkpoints: {},
};

describe("Session sliders", () => {
  it("starts at range midpoints", () => {
    const s = new Session(META);
    expect(s.values).toEqual([1.25, 0.0, 0.5]);
  });

  it("clamps to the range unless extrapolation is on", () => {
    const s = new Session(META);
    s.setValue(0, 99);
    expect(s.values[0]).toBe(2.0);
    expect(s.outOfRangeNames()).toEqual([]);

    s.extrapolate = true;
    s.setValue(0, 2.6);
    expect(s.values[0]).toBe(2.6);
    expect(s.outOfRangeNames()).toEqual(["amplitude"]);
  });
});

describe("Session transfer function", () => {
  it("keeps control points sorted when adding", () => {
    const s = new Session(META);
    s.addTfPoint(0.5, [1, 1, 1, 0.4]);
    s.addTfPoint(0.2, [0, 0, 0, 0.1]);
    const positions = s.tfPoints.map((p) => p.position);
    expect([...positions].sort((a, b) => a - b)).toEqual(positions);
  });

  it("pins the endpoints at 0 and 1", () => {
    const s = new Session(META);
    s.moveTfPoint(0, 0.4, 0.7);
    expect(s.tfPoints[0].position).toBe(0);
    expect(s.tfPoints[0].rgba[3]).toBeCloseTo(0.7);
    const last = s.tfPoints.length - 1;
    s.moveTfPoint(last, 0.2, 0.1);
    expect(s.tfPoints[last].position).toBe(1);
  });

  it("bounds interior moves by their neighbors", () => {
    const s = new Session(META);
    const index = s.addTfPoint(0.5, [1, 1, 1, 0.5]);
    s.moveTfPoint(index, -3.0, 0.5);
    expect(s.tfPoints[index].position)
      .toBeGreaterThan(s.tfPoints[index - 1].position);
    s.moveTfPoint(index, 3.0, 0.5);
    expect(s.tfPoints[index].position)
      .toBeLessThan(s.tfPoints[index + 1].position);
  });

  it("refuses to remove endpoints", () => {
    const s = new Session(META);
    expect(s.removeTfPoint(0)).toBe(false);
    expect(s.removeTfPoint(s.tfPoints.length - 1)).toBe(false);
    const index = s.addTfPoint(0.5, [1, 1, 1, 0.5]);
    expect(s.removeTfPoint(index)).toBe(true);
  });

  it("exports the service wire format", () => {
    const s = new Session(META);
    const spec = s.tfSpec();
    expect(spec.points[0].position).toBe(0);
    expect(spec.points.at(-1)!.position).toBe(1);
    for (const p of spec.points) {
      expect(p.rgba).toHaveLength(4);
    }
    // export is a deep copy
    spec.points[0].rgba[0] = 123;
    expect(s.tfPoints[0].rgba[0]).not.toBe(123);
  });
});
