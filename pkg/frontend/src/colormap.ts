/** The fixed 256-step heatmap colormap.
 *
 * This table must stay byte-identical to the one the data recorder bakes
 * into its SVG plots, so both renderers show the same colors for the same
 * rates. It is built from the same eleven anchors with the same rounding
 * (half to even, like Python's round) and never taken from a charting
 * library.
 */

const ANCHORS: [number, number, number][] = [
  [0.267004, 0.004874, 0.329415],
  [0.282623, 0.140926, 0.457517],
  [0.253935, 0.265254, 0.529983],
  [0.206756, 0.371758, 0.553117],
  [0.163625, 0.471133, 0.558148],
  [0.127568, 0.566949, 0.550556],
  [0.134692, 0.658636, 0.517649],
  [0.266941, 0.748751, 0.440573],
  [0.477504, 0.821444, 0.318195],
  [0.741388, 0.873449, 0.149561],
  [0.993248, 0.906157, 0.143936],
];

/** Pixels with no data yet (partial scans) render in this color. */
export const GAP_COLOR = "#c8c8c8";

// Python rounds half to even; Math.round rounds half up. The difference
// shows in the table bytes, so reproduce the Python behavior.
function roundHalfEven(x: number): number {
  const floor = Math.floor(x);
  const diff = x - floor;
  if (diff > 0.5) return floor + 1;
  if (diff < 0.5) return floor;
  return floor % 2 === 0 ? floor : floor + 1;
}

function hexByte(v: number): string {
  return roundHalfEven(255 * v)
    .toString(16)
    .padStart(2, "0");
}

function build(): string[] {
  const steps = 256;
  const last = ANCHORS.length - 1;
  const table: string[] = [];
  for (let k = 0; k < steps; k++) {
    const t = (k / (steps - 1)) * last;
    const i = Math.min(Math.floor(t), last - 1);
    const frac = t - i;
    let color = "#";
    for (let c = 0; c < 3; c++) {
      color += hexByte(ANCHORS[i][c] + frac * (ANCHORS[i + 1][c] - ANCHORS[i][c]));
    }
    table.push(color);
  }
  return table;
}

export const COLORMAP: readonly string[] = build();

/** Table index for a value; values outside [vmin, vmax] clamp. */
export function colorIndex(value: number, vmin: number, vmax: number): number {
  if (vmax <= vmin) return 0;
  let t = (value - vmin) / (vmax - vmin);
  t = Math.min(Math.max(t, 0), 1);
  return roundHalfEven(t * 255);
}

export function colorFor(value: number, vmin: number, vmax: number): string {
  return COLORMAP[colorIndex(value, vmin, vmax)];
}
