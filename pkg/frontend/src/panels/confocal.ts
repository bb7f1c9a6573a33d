/** Confocal scan panel: settings form, live row-by-row image fill,
 *  cursor placement by click, optimizer overlay, saving through the
 *  recorder. All numbers shown come from server messages; this file
 *  only moves them onto the screen. */

import type { LabClient } from "../client.js";
import type { Notices } from "../notices.js";
import { ConfocalState } from "../state/confocal.js";
import { gauss1d } from "../state/odmr.js";
import { renderHeatmap, clickToPixel } from "../heatmap.js";
import { renderLinePlot } from "../lineplot.js";
import { grid, pixelPosition, scanAxes, validateScanSettings } from "../transform.js";
import { LabError } from "../protocol.js";
import type {
  OptimizerResult, Position3, RowPayload, ScanDonePayload, ScanImage,
  ScanSettings,
} from "../protocol.js";

interface Elements {
  form: HTMLFormElement;
  problems: HTMLElement;
  start: HTMLButtonElement;
  stop: HTMLButtonElement;
  optimize: HTMLButtonElement;
  save: HTMLButtonElement;
  tag: HTMLInputElement;
  canvas: HTMLCanvasElement;
  overlay: HTMLCanvasElement;
  progress: HTMLElement;
  cursorOut: HTMLElement;
  optOut: HTMLElement;
  zplot: HTMLCanvasElement;
}

function num(form: HTMLFormElement, name: string): number {
  const el = form.elements.namedItem(name) as HTMLInputElement;
  return Number(el.value);
}

export class ConfocalPanel {
  readonly state = new ConfocalState();

  private client: LabClient;
  private notices: Notices;
  private el: Elements;
  private module: string | null = null;
  private lastOpt: OptimizerResult | null = null;

  /** Injected by main: resolves the active recorder module's name. */
  recorderLookup: () => string | null = () => null;

  constructor(client: LabClient, notices: Notices, el: Elements) {
    this.client = client;
    this.notices = notices;
    this.el = el;

    el.form.addEventListener("input", () => this.validate());
    el.start.addEventListener("click", () => void this.startScan());
    el.stop.addEventListener("click", () => void this.stopScan());
    el.optimize.addEventListener("click", () => void this.optimize());
    el.save.addEventListener("click", () => void this.save());
    el.overlay.addEventListener("click", (ev) => void this.click(ev));
    this.validate();
  }

  /** Bind to the module instance found in the kernel's table. */
  setModule(name: string | null): void {
    this.module = name;
    const off = name === null;
    this.el.start.disabled = off;
    this.el.stop.disabled = off;
    this.el.optimize.disabled = off;
    this.el.save.disabled = off;
    if (off) this.el.progress.textContent = "no confocal module";
  }

  settingsFromForm(): ScanSettings {
    const f = this.el.form;
    const plane = (f.elements.namedItem("plane") as HTMLSelectElement).value as "xy" | "xz";
    return {
      plane,
      center: { x: num(f, "cx"), y: num(f, "cy"), z: num(f, "cz") },
      extent: [num(f, "w"), num(f, "h")],
      resolution: [num(f, "nx"), num(f, "ny")],
      dwell_s: num(f, "dwell"),
    };
  }

  private validate(): string[] {
    const problems = validateScanSettings(this.settingsFromForm());
    this.el.problems.textContent = problems.join("; ");
    this.el.start.disabled = problems.length > 0 || this.module === null;
    return problems;
  }

  private async startScan(): Promise<void> {
    if (!this.module || this.validate().length > 0) return;
    const settings = this.settingsFromForm();
    try {
      const scanId = (await this.client.request(this.module, "start_scan",
                                                { settings })) as number;
      this.state.beginScan(settings, scanId);
      this.lastOpt = null;
      this.repaint();
    } catch (e) {
      this.fail("start_scan", e);
    }
  }

  private async stopScan(): Promise<void> {
    if (!this.module) return;
    try {
      await this.client.request(this.module, "stop_scan");
    } catch (e) {
      this.fail("stop_scan", e);
    }
  }

  private async click(ev: MouseEvent): Promise<void> {
    const s = this.state.settings;
    if (!this.module || !s) return;
    const [nx, ny] = s.resolution;
    const hit = clickToPixel(this.el.overlay, ev.offsetX, ev.offsetY, nx, ny);
    if (!hit) return;
    const p = pixelPosition(s, hit.ix, hit.iy);
    try {
      await this.client.request(this.module, "set_cursor", { p });
      this.state.cursor = p;
      this.repaint();
    } catch (e) {
      this.fail("set_cursor", e);
    }
  }

  private async optimize(): Promise<void> {
    if (!this.module) return;
    const p = this.state.cursor;
    if (!p) {
      this.notices.show("optimize: click the image to place the cursor first", "info");
      return;
    }
    this.el.optimize.disabled = true;
    try {
      const result = (await this.client.request(
        this.module, "optimize_at", { p })) as OptimizerResult;
      this.lastOpt = result;
      if (result.accepted) this.state.cursor = result.refined;
      this.renderOptimize(result);
      this.repaint();
    } catch (e) {
      this.fail("optimize_at", e);
    } finally {
      this.el.optimize.disabled = false;
    }
  }

  private async save(): Promise<void> {
    if (!this.module) return;
    const recorder = this.recorderLookup();
    if (!recorder) {
      this.notices.show("save: no active recorder module");
      return;
    }
    try {
      const image = (await this.client.request(this.module, "get_image")) as ScanImage | null;
      if (!image) {
        this.notices.show("save: no finished image yet", "info");
        return;
      }
      const tag = this.el.tag.value || "confocal";
      const paths = (await this.client.request(recorder, "save_image",
                                               { tag, image })) as string[];
      this.notices.show(`saved ${paths.join(" and ")}`, "info");
    } catch (e) {
      this.fail("save_image", e);
    }
  }

  handleRow(p: RowPayload): void {
    if (this.state.applyRow(p)) this.repaint();
  }

  handleDone(p: ScanDonePayload): void {
    if (!this.state.applyDone(p)) return;
    this.repaint();
    // authoritative backfill; covers rows missed while disconnected
    void this.resyncImage();
  }

  /** After (re)connect: pull cursor and the last finished image. */
  async resync(): Promise<void> {
    if (!this.module) return;
    try {
      const status = (await this.client.request(this.module, "get_status")) as {
        scanning: boolean; cursor: Position3 | null;
      };
      if (status.cursor) this.state.cursor = status.cursor;
      if (!this.state.scanning) await this.resyncImage();
      this.repaint();
    } catch {
      // module may have been deactivated; the table shows that
    }
  }

  private async resyncImage(): Promise<void> {
    if (!this.module) return;
    try {
      const image = (await this.client.request(this.module, "get_image")) as ScanImage | null;
      // a scan may have started while the request was in flight
      if (!image || this.state.scanning) return;
      this.state.loadImage(image);
      this.repaint();
    } catch {
      /* keep showing what we have */
    }
  }

  private fail(op: string, e: unknown): void {
    const kind = e instanceof LabError ? e.kind : "ERROR";
    this.notices.show(`${op}: [${kind}] ${(e as Error).message}`);
  }

  private repaint(): void {
    const s = this.state.settings;
    if (!s) return;
    const [nx, ny] = s.resolution;
    renderHeatmap(this.el.canvas, this.state.rows, nx, this.state.valueRange());
    this.el.progress.textContent = this.state.scanning
      ? `scanning ${this.state.rowsComplete}/${ny} rows (scan ${this.state.scanId})`
      : `idle, ${this.state.rowsComplete}/${ny} rows`;
    this.drawOverlay();
    const c = this.state.cursor;
    this.el.cursorOut.textContent = c
      ? `cursor: (${c.x.toFixed(3)}, ${c.y.toFixed(3)}, ${c.z.toFixed(3)}) um`
      : "cursor: not set";
  }

  private drawOverlay(): void {
    const s = this.state.settings;
    const ov = this.el.overlay;
    const ctx = ov.getContext("2d");
    if (!ctx || !s) return;
    if (ov.width !== ov.clientWidth || ov.height !== ov.clientHeight) {
      ov.width = ov.clientWidth;
      ov.height = ov.clientHeight;
    }
    ctx.clearRect(0, 0, ov.width, ov.height);
    const { xs, ys } = scanAxes(s);
    const toCss = (p: Position3): { x: number; y: number } | null => {
      const slow = s.plane === "xy" ? p.y : p.z;
      if (p.x < Math.min(xs[0], xs[xs.length - 1]) - 1e-9
          || p.x > Math.max(xs[0], xs[xs.length - 1]) + 1e-9) return null;
      const lo = Math.min(ys[0], ys[ys.length - 1]);
      const hi = Math.max(ys[0], ys[ys.length - 1]);
      if (slow < lo - 1e-9 || slow > hi + 1e-9) return null;
      const fx = (p.x - xs[0]) / (xs[xs.length - 1] - xs[0]);
      const fy = (slow - ys[0]) / (ys[ys.length - 1] - ys[0]);
      // pixel centers sit half a cell from the edges
      const nx = s.resolution[0];
      const ny = s.resolution[1];
      return {
        x: ((fx * (nx - 1) + 0.5) / nx) * ov.width,
        y: ((ny - 1 - fy * (ny - 1) + 0.5) / ny) * ov.height,
      };
    };
    const cursor = this.state.cursor;
    if (cursor) {
      const at = toCss(cursor);
      if (at) {
        ctx.strokeStyle = "#ff3b30";
        ctx.lineWidth = 1;
        ctx.beginPath();
        ctx.moveTo(at.x - 8, at.y);
        ctx.lineTo(at.x + 8, at.y);
        ctx.moveTo(at.x, at.y - 8);
        ctx.lineTo(at.x, at.y + 8);
        ctx.stroke();
      }
    }
    const opt = this.lastOpt;
    if (opt && opt.accepted) {
      const at = toCss(opt.refined);
      if (at) {
        ctx.strokeStyle = "#ffd60a";
        ctx.lineWidth = 1.5;
        ctx.beginPath();
        ctx.arc(at.x, at.y, 7, 0, 2 * Math.PI);
        ctx.stroke();
      }
    }
  }

  private renderOptimize(r: OptimizerResult): void {
    const parts = [
      `accepted: ${r.accepted}`,
      `refined: (${r.refined.x.toFixed(3)}, ${r.refined.y.toFixed(3)}, `
        + `${r.refined.z.toFixed(3)}) um`,
    ];
    if (r.fit_z && r.fit_z.converged) {
      const p = r.fit_z.params;
      parts.push(`z fit: x0 ${p.x0.toFixed(3)} um, sigma ${p.sigma.toFixed(3)} um`);
      // draw the fitted 1D profile around the center
      const span = Math.max(6 * p.sigma, 0.2);
      const zs = grid(p.x0 - span / 2, p.x0 + span / 2, 101);
      renderLinePlot(this.el.zplot, [{
        xs: zs,
        ys: zs.map((z) => gauss1d(p, z)),
        color: "#0a84ff",
      }], {
        xLabel: "z (um)",
        yLabel: "rate (counts/s)",
        markX: r.refined.z,
      });
    }
    this.el.optOut.textContent = parts.join("  |  ");
  }
}
