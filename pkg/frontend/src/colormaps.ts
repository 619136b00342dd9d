/**
 * Color mappings for the three scalar kinds the stream carries.
 *
 * - weight: diverging map, saturated blue at -max through neutral at 0 to
 *   saturated red at +max.
 * - step: four-stop ramp gray -> blue -> red -> pink over normalized time.
 * - group: categorical palette, id 0 (ungrouped) is a muted gray.
 */

export type Rgb = [number, number, number];

const NEUTRAL: Rgb = [235, 235, 235];
const SAT_BLUE: Rgb = [20, 40, 230];
const SAT_RED: Rgb = [230, 30, 20];

function lerp(a: Rgb, b: Rgb, t: number): Rgb {
  const u = Math.min(1, Math.max(0, t));
  return [
    Math.round(a[0] + (b[0] - a[0]) * u),
    Math.round(a[1] + (b[1] - a[1]) * u),
    Math.round(a[2] + (b[2] - a[2]) * u),
  ];
}

export function weightColor(value: number, maxAbs: number): Rgb {
  if (maxAbs <= 0) return NEUTRAL;
  const t = Math.abs(value) / maxAbs;
  return value < 0 ? lerp(NEUTRAL, SAT_BLUE, t) : lerp(NEUTRAL, SAT_RED, t);
}

/** Fixed stops at t = 0, 1/3, 2/3, 1: gray, blue, red, pink. */
const STEP_STOPS: Rgb[] = [
  [128, 128, 128],
  [30, 60, 230],
  [230, 40, 30],
  [255, 130, 190],
];

export function stepColor(t: number): Rgb {
  const u = Math.min(1, Math.max(0, t));
  const span = u * (STEP_STOPS.length - 1);
  const i = Math.min(STEP_STOPS.length - 2, Math.floor(span));
  return lerp(STEP_STOPS[i], STEP_STOPS[i + 1], span - i);
}

const GROUP_PALETTE: Rgb[] = [
  [60, 170, 90], // group 1: green
  [235, 130, 190], // group 2: pink
  [70, 130, 220],
  [240, 170, 60],
  [150, 90, 200],
  [90, 200, 200],
];

export function groupColor(groupId: number): Rgb {
  if (groupId <= 0) return [150, 150, 150];
  return GROUP_PALETTE[(groupId - 1) % GROUP_PALETTE.length];
}

export function grayColor(t: number): Rgb {
  const v = Math.round(255 * Math.min(1, Math.max(0, t)));
  return [v, v, v];
}

export function css(rgb: Rgb): string {
  return `rgb(${rgb[0]},${rgb[1]},${rgb[2]})`;
}
