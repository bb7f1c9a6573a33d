/** Small canvas line plot: axes, ticks, a few series, optional vertical
 *  marker. Enough for a live spectrum and a fit overlay; not a charting
 *  library. */

export interface Series {
  xs: ReadonlyArray<number>;
  ys: ReadonlyArray<number | null>;
  color: string;
  width?: number;
  dash?: number[];
}

export interface PlotOptions {
  xLabel?: string;
  yLabel?: string;
  xTickFormat?: (v: number) => string;
  yTickFormat?: (v: number) => string;
  /** Vertical marker line, e.g. a fitted center. */
  markX?: number;
}

const MARGIN = { left: 64, right: 12, top: 10, bottom: 36 };

function compact(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e5 || a < 1e-3) return v.toExponential(2);
  return Number(v.toPrecision(4)).toString();
}

function niceTicks(lo: number, hi: number, n: number): number[] {
  if (!(hi > lo)) return [lo];
  const raw = (hi - lo) / n;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  const norm = raw / mag;
  const step = (norm < 1.5 ? 1 : norm < 3 ? 2 : norm < 7 ? 5 : 10) * mag;
  const first = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = first; v <= hi + step * 1e-9; v += step) ticks.push(v);
  return ticks;
}

export function renderLinePlot(
  canvas: HTMLCanvasElement,
  series: Series[],
  opts: PlotOptions = {},
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const W = canvas.width;
  const H = canvas.height;
  const style = getComputedStyle(canvas);
  const fg = style.getPropertyValue("--plot-fg").trim() || "#333";
  const grid = style.getPropertyValue("--plot-grid").trim() || "#ddd";
  ctx.clearRect(0, 0, W, H);

  let xMin = Infinity, xMax = -Infinity, yMin = Infinity, yMax = -Infinity;
  for (const s of series) {
    for (let i = 0; i < s.xs.length; i++) {
      const y = s.ys[i];
      if (y === null || y === undefined || !Number.isFinite(y)) continue;
      const x = s.xs[i];
      if (x < xMin) xMin = x;
      if (x > xMax) xMax = x;
      if (y < yMin) yMin = y;
      if (y > yMax) yMax = y;
    }
  }
  if (!(xMax >= xMin)) return; // nothing plottable yet
  if (xMax === xMin) { xMin -= 0.5; xMax += 0.5; }
  if (yMax === yMin) { yMin -= 0.5; yMax += 0.5; }
  const yPad = (yMax - yMin) * 0.06;
  yMin -= yPad;
  yMax += yPad;

  const px = (x: number) =>
    MARGIN.left + ((x - xMin) / (xMax - xMin)) * (W - MARGIN.left - MARGIN.right);
  const py = (y: number) =>
    H - MARGIN.bottom - ((y - yMin) / (yMax - yMin)) * (H - MARGIN.top - MARGIN.bottom);

  ctx.font = "11px system-ui, sans-serif";
  ctx.strokeStyle = grid;
  ctx.fillStyle = fg;
  ctx.lineWidth = 1;

  const fx = opts.xTickFormat ?? compact;
  const fy = opts.yTickFormat ?? compact;
  for (const t of niceTicks(xMin, xMax, 6)) {
    const x = px(t);
    ctx.beginPath();
    ctx.moveTo(x, MARGIN.top);
    ctx.lineTo(x, H - MARGIN.bottom);
    ctx.stroke();
    ctx.textAlign = "center";
    ctx.fillText(fx(t), x, H - MARGIN.bottom + 14);
  }
  for (const t of niceTicks(yMin, yMax, 5)) {
    const y = py(t);
    ctx.beginPath();
    ctx.moveTo(MARGIN.left, y);
    ctx.lineTo(W - MARGIN.right, y);
    ctx.stroke();
    ctx.textAlign = "right";
    ctx.fillText(fy(t), MARGIN.left - 6, y + 4);
  }

  ctx.strokeStyle = fg;
  ctx.strokeRect(MARGIN.left, MARGIN.top,
                 W - MARGIN.left - MARGIN.right, H - MARGIN.top - MARGIN.bottom);
  if (opts.xLabel) {
    ctx.textAlign = "center";
    ctx.fillText(opts.xLabel, MARGIN.left + (W - MARGIN.left - MARGIN.right) / 2, H - 4);
  }
  if (opts.yLabel) {
    ctx.save();
    ctx.translate(12, MARGIN.top + (H - MARGIN.top - MARGIN.bottom) / 2);
    ctx.rotate(-Math.PI / 2);
    ctx.textAlign = "center";
    ctx.fillText(opts.yLabel, 0, 0);
    ctx.restore();
  }

  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = s.width ?? 1.5;
    ctx.setLineDash(s.dash ?? []);
    ctx.beginPath();
    let pen = false;
    for (let i = 0; i < s.xs.length; i++) {
      const y = s.ys[i];
      if (y === null || y === undefined || !Number.isFinite(y)) {
        pen = false;
        continue;
      }
      const cx = px(s.xs[i]);
      const cy = py(y);
      if (pen) ctx.lineTo(cx, cy);
      else ctx.moveTo(cx, cy);
      pen = true;
    }
    ctx.stroke();
    ctx.setLineDash([]);
  }

  if (opts.markX !== undefined && opts.markX >= xMin && opts.markX <= xMax) {
    ctx.strokeStyle = fg;
    ctx.setLineDash([4, 3]);
    ctx.beginPath();
    ctx.moveTo(px(opts.markX), MARGIN.top);
    ctx.lineTo(px(opts.markX), H - MARGIN.bottom);
    ctx.stroke();
    ctx.setLineDash([]);
  }
}
