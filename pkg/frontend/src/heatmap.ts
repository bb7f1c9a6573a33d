/** Canvas heatmap, one device pixel per data point, scaled up by CSS
 *  with image-rendering: pixelated. Row 0 is drawn at the bottom, the
 *  same orientation the recorder uses for its SVG exports. */

import { COLORMAP, GAP_COLOR, colorIndex } from "./colormap.js";

function hexToRgb(hex: string): [number, number, number] {
  return [
    parseInt(hex.slice(1, 3), 16),
    parseInt(hex.slice(3, 5), 16),
    parseInt(hex.slice(5, 7), 16),
  ];
}

const TABLE: Array<[number, number, number]> = COLORMAP.map(hexToRgb);
const GAP_RGB = hexToRgb(GAP_COLOR);

export function renderHeatmap(
  canvas: HTMLCanvasElement,
  rows: ReadonlyArray<ReadonlyArray<number | null> | null>,
  nx: number,
  range: { min: number; max: number } | null,
): void {
  const ny = rows.length;
  if (nx < 1 || ny < 1) return;
  if (canvas.width !== nx) canvas.width = nx;
  if (canvas.height !== ny) canvas.height = ny;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const img = ctx.createImageData(nx, ny);
  const buf = img.data;
  for (let i = 0; i < ny; i++) {
    const row = rows[i];
    const base = (ny - 1 - i) * nx * 4; // row 0 at the bottom
    for (let j = 0; j < nx; j++) {
      const v = row ? row[j] : null;
      const rgb = v === null || v === undefined || !Number.isFinite(v) || range === null
        ? GAP_RGB
        : TABLE[colorIndex(v, range.min, range.max)];
      const o = base + j * 4;
      buf[o] = rgb[0];
      buf[o + 1] = rgb[1];
      buf[o + 2] = rgb[2];
      buf[o + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
}

/** Click position (CSS pixels inside the canvas) to data indices.
 *  Accounts for the bottom-up row order. Returns null outside. */
export function clickToPixel(
  canvas: HTMLCanvasElement,
  offsetX: number,
  offsetY: number,
  nx: number,
  ny: number,
): { ix: number; iy: number } | null {
  const rect = { w: canvas.clientWidth, h: canvas.clientHeight };
  if (rect.w <= 0 || rect.h <= 0) return null;
  const ix = Math.floor((offsetX / rect.w) * nx);
  const iyTop = Math.floor((offsetY / rect.h) * ny);
  if (ix < 0 || ix >= nx || iyTop < 0 || iyTop >= ny) return null;
  return { ix, iy: ny - 1 - iyTop };
}
