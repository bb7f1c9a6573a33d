/** Coordinate transforms between scan pixels and micrometers.
 *
 * The sampling convention is the server's: n equidistant points from
 * start to stop inclusive, point k at start + k*step with the endpoints
 * forced exact. Everything here is a display transform; no measurement
 * data is produced on the client.
 */

import type { Position3, ScanSettings, SweepSettings } from "./protocol.js";

export function grid(start: number, stop: number, n: number): number[] {
  if (n < 2) throw new Error("grid needs at least 2 points");
  const step = (stop - start) / (n - 1);
  const points: number[] = [];
  for (let k = 0; k < n; k++) points.push(start + k * step);
  points[0] = start;
  points[n - 1] = stop;
  return points;
}

/** Pixel-center coordinates: fast (row) axis, then slow (line) axis. */
export function scanAxes(s: ScanSettings): { xs: number[]; ys: number[] } {
  const [nx, ny] = s.resolution;
  const [w, h] = s.extent;
  const c = s.center;
  const xs = grid(c.x - w / 2.0, c.x + w / 2.0, nx);
  const slowCenter = s.plane === "xy" ? c.y : c.z;
  const ys = grid(slowCenter - h / 2.0, slowCenter + h / 2.0, ny);
  return { xs, ys };
}

/** Distance between adjacent pixel centers, per axis. */
export function pixelPitch(s: ScanSettings): { dx: number; dy: number } {
  return {
    dx: s.extent[0] / (s.resolution[0] - 1),
    dy: s.extent[1] / (s.resolution[1] - 1),
  };
}

/** The 3D position of pixel (ix, iy); the off-plane axis stays at center. */
export function pixelPosition(s: ScanSettings, ix: number, iy: number): Position3 {
  const { xs, ys } = scanAxes(s);
  if (ix < 0 || ix >= xs.length || iy < 0 || iy >= ys.length) {
    throw new Error(`pixel (${ix}, ${iy}) outside ${xs.length}x${ys.length}`);
  }
  if (s.plane === "xy") return { x: xs[ix], y: ys[iy], z: s.center.z };
  return { x: xs[ix], y: s.center.y, z: ys[iy] };
}

/** Nearest pixel indices for a position, clamped to the image. */
export function positionToPixel(s: ScanSettings, p: Position3): { ix: number; iy: number } {
  const [nx, ny] = s.resolution;
  const [w, h] = s.extent;
  const slow = s.plane === "xy" ? p.y : p.z;
  const slowCenter = s.plane === "xy" ? s.center.y : s.center.z;
  const fx = ((p.x - (s.center.x - w / 2)) / w) * (nx - 1);
  const fy = ((slow - (slowCenter - h / 2)) / h) * (ny - 1);
  const clamp = (v: number, hi: number) => Math.min(Math.max(Math.round(v), 0), hi);
  return { ix: clamp(fx, nx - 1), iy: clamp(fy, ny - 1) };
}

/* Client-side mirrors of the server's settings checks, so the form can
   reject bad input before a request goes out. The server remains the
   authority; these only reproduce its documented rules. */

export function validateScanSettings(s: ScanSettings): string[] {
  const problems: string[] = [];
  if (s.plane !== "xy" && s.plane !== "xz") problems.push("plane must be xy or xz");
  if (!(s.extent[0] > 0) || !(s.extent[1] > 0)) problems.push("extent must be positive");
  if (!Number.isInteger(s.resolution[0]) || !Number.isInteger(s.resolution[1])
      || s.resolution[0] < 2 || s.resolution[1] < 2) {
    problems.push("resolution must be at least 2x2");
  }
  if (!(s.dwell_s > 0)) problems.push("dwell_s must be > 0");
  return problems;
}

export function validateSweepSettings(s: SweepSettings): string[] {
  const problems: string[] = [];
  if (!(s.f_start < s.f_stop)) problems.push("f_start must be < f_stop");
  if (!Number.isInteger(s.n_points) || s.n_points < 2) problems.push("n_points must be >= 2");
  if (!(s.dwell_s > 0)) problems.push("dwell_s must be > 0");
  if (s.n_sweeps !== "continuous"
      && (!Number.isInteger(s.n_sweeps) || (s.n_sweeps as number) < 1)) {
    problems.push('n_sweeps must be an integer >= 1 or "continuous"');
  }
  return problems;
}
