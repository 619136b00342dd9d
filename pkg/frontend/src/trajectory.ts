/**
 * Trajectory geometry preparation: positions normalized into a unit cube and
 * per-point colors from the step ramp.  Pure data wrangling so it is
 * testable; the three.js scene wiring lives in viewer_main.
 */

import { Rgb, stepColor } from "./colormaps.js";
import { GeometryBody } from "./types.js";

export interface TrajectoryGeometry {
  positions: Float32Array; // normalized xyz triples
  colors: Float32Array; // rgb in [0,1] per point
  count: number;
}

export function buildTrajectoryGeometry(geom: GeometryBody): TrajectoryGeometry {
  const n = geom.points.length / 3;
  const steps = geom.scalars["step"] ?? [];
  const maxStep = steps.reduce((m, v) => Math.max(m, v), 0);

  const mins = [Infinity, Infinity, Infinity];
  const maxs = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < n; i++) {
    for (let a = 0; a < 3; a++) {
      mins[a] = Math.min(mins[a], geom.points[3 * i + a]);
      maxs[a] = Math.max(maxs[a], geom.points[3 * i + a]);
    }
  }
  const spans = maxs.map((m, a) => Math.max(m - mins[a], 1e-12));

  const positions = new Float32Array(3 * n);
  const colors = new Float32Array(3 * n);
  for (let i = 0; i < n; i++) {
    for (let a = 0; a < 3; a++) {
      positions[3 * i + a] = (geom.points[3 * i + a] - mins[a]) / spans[a];
    }
    const rgb: Rgb = stepColor(maxStep > 0 ? (steps[i] ?? 0) / maxStep : 0);
    colors[3 * i] = rgb[0] / 255;
    colors[3 * i + 1] = rgb[1] / 255;
    colors[3 * i + 2] = rgb[2] / 255;
  }
  return { positions, colors, count: n };
}
