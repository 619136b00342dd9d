/**
 * 2-D canvas renderers for the grid views.
 *
 * Rendering is expressed against a tiny Painter interface so the drawing
 * logic is testable without a DOM; CanvasPainter adapts a real 2D context.
 * Weight elevation (z) is shown through color saturation, per the declared
 * 2-D-plus-brightness simplification.  Scalar values are read as received
 * and never rescaled in place.
 */

import { css, grayColor, groupColor, weightColor } from "./colormaps.js";
import { GeometryBody } from "./types.js";

export interface Painter {
  clear(width: number, height: number): void;
  rect(x: number, y: number, w: number, h: number, color: string): void;
}

export class CanvasPainter implements Painter {
  constructor(private ctx: CanvasRenderingContext2D) {}

  clear(width: number, height: number): void {
    this.ctx.clearRect(0, 0, width, height);
  }

  rect(x: number, y: number, w: number, h: number, color: string): void {
    this.ctx.fillStyle = color;
    this.ctx.fillRect(x, y, w, h);
  }
}

interface Bounds {
  minX: number;
  minY: number;
  spanX: number;
  spanY: number;
}

function bounds(points: number[]): Bounds {
  let minX = Infinity,
    minY = Infinity,
    maxX = -Infinity,
    maxY = -Infinity;
  for (let i = 0; i < points.length; i += 3) {
    minX = Math.min(minX, points[i]);
    maxX = Math.max(maxX, points[i]);
    minY = Math.min(minY, points[i + 1]);
    maxY = Math.max(maxY, points[i + 1]);
  }
  return { minX, minY, spanX: Math.max(maxX - minX, 1e-9), spanY: Math.max(maxY - minY, 1e-9) };
}

/** One colored rectangle per quad; returns the number of quads drawn. */
export function renderWeightGrid(painter: Painter, geom: GeometryBody, width: number, height: number): number {
  painter.clear(width, height);
  const weights = geom.scalars["weight"] ?? [];
  const maxAbs = weights.reduce((m, v) => Math.max(m, Math.abs(v)), 0);
  const b = bounds(geom.points);
  const sx = width / b.spanX;
  const sy = height / b.spanY;
  let drawn = 0;
  for (let q = 0; q + 3 < geom.quads.length; q += 4) {
    const corners = [geom.quads[q], geom.quads[q + 1], geom.quads[q + 2], geom.quads[q + 3]];
    const xs = corners.map((i) => geom.points[3 * i]);
    const ys = corners.map((i) => geom.points[3 * i + 1]);
    const x0 = (Math.min(...xs) - b.minX) * sx;
    const x1 = (Math.max(...xs) - b.minX) * sx;
    // canvas y grows downward; grid row 0 must land at the bottom
    const y0 = height - (Math.max(...ys) - b.minY) * sy;
    const y1 = height - (Math.min(...ys) - b.minY) * sy;
    painter.rect(x0, y0, x1 - x0, y1 - y0, css(weightColor(weights[corners[0]] ?? 0, maxAbs)));
    drawn++;
  }
  return drawn;
}

/** One grayscale pixel-rect per point; returns the number of points drawn. */
export function renderImageGrid(painter: Painter, geom: GeometryBody, width: number, height: number): number {
  painter.clear(width, height);
  const intensity = geom.scalars["intensity"] ?? [];
  const max = intensity.reduce((m, v) => Math.max(m, v), 0);
  const b = bounds(geom.points);
  const sx = width / b.spanX;
  const sy = height / b.spanY;
  const px = Math.max(1, Math.ceil(sx / 32));
  let drawn = 0;
  for (let i = 0; i < geom.points.length / 3; i++) {
    const x = (geom.points[3 * i] - b.minX) * sx;
    const y = height - (geom.points[3 * i + 1] - b.minY) * sy;
    const t = max > 0 ? (intensity[i] ?? 0) / max : 0;
    painter.rect(x, y, px, px, css(grayColor(t)));
    drawn++;
  }
  return drawn;
}

/** Distribution points colored by similarity group; returns points drawn. */
export function renderDistributionGrid(painter: Painter, geom: GeometryBody, width: number, height: number): number {
  painter.clear(width, height);
  const groups = geom.scalars["group"] ?? [];
  const b = bounds(geom.points);
  const sx = width / b.spanX;
  const sy = height / b.spanY;
  let drawn = 0;
  for (let i = 0; i < geom.points.length / 3; i++) {
    const x = (geom.points[3 * i] - b.minX) * sx;
    const y = height - (geom.points[3 * i + 1] - b.minY) * sy;
    painter.rect(x, y, 2, 2, css(groupColor(groups[i] ?? 0)));
    drawn++;
  }
  return drawn;
}
