/** ODMR panel: sweep settings, live mean spectrum, sweep matrix and a
 *  Lorentzian fit readout. Spectrum and matrix are re-fetched from the
 *  server on every sweep event, so the plot never shows client math. */

import type { LabClient } from "../client.js";
import type { Notices } from "../notices.js";
import { OdmrState, lorentzDip } from "../state/odmr.js";
import { renderHeatmap } from "../heatmap.js";
import { renderLinePlot } from "../lineplot.js";
import type { Series } from "../lineplot.js";
import { grid, validateSweepSettings } from "../transform.js";
import { LabError } from "../protocol.js";
import type {
  FitResult, OdmrRecord, SweepPayload, SweepDonePayload, SweepSettings,
} from "../protocol.js";

interface Elements {
  form: HTMLFormElement;
  problems: HTMLElement;
  start: HTMLButtonElement;
  stop: HTMLButtonElement;
  fit: HTMLButtonElement;
  save: HTMLButtonElement;
  tag: HTMLInputElement;
  plot: HTMLCanvasElement;
  matrix: HTMLCanvasElement;
  counter: HTMLElement;
  fitOut: HTMLElement;
}

function num(form: HTMLFormElement, name: string): number {
  return Number((form.elements.namedItem(name) as HTMLInputElement).value);
}

export class OdmrPanel {
  readonly state = new OdmrState();

  /** Injected by main: resolves the active recorder module's name. */
  recorderLookup: () => string | null = () => null;

  private client: LabClient;
  private notices: Notices;
  private el: Elements;
  private module: string | null = null;
  private fetching = false;
  private fetchAgain = false;

  constructor(client: LabClient, notices: Notices, el: Elements) {
    this.client = client;
    this.notices = notices;
    this.el = el;

    el.form.addEventListener("input", () => this.validate());
    el.start.addEventListener("click", () => void this.start());
    el.stop.addEventListener("click", () => void this.stop());
    el.fit.addEventListener("click", () => void this.runFit());
    el.save.addEventListener("click", () => void this.save());
    this.validate();
  }

  setModule(name: string | null): void {
    this.module = name;
    const off = name === null;
    this.el.start.disabled = off;
    this.el.stop.disabled = off;
    this.el.fit.disabled = off;
    this.el.save.disabled = off;
    if (off) this.el.counter.textContent = "no odmr module";
  }

  settingsFromForm(): SweepSettings {
    const f = this.el.form;
    const continuous = (f.elements.namedItem("continuous") as HTMLInputElement).checked;
    return {
      f_start: num(f, "f_start"),
      f_stop: num(f, "f_stop"),
      n_points: num(f, "n_points"),
      power: num(f, "power"),
      dwell_s: num(f, "dwell"),
      n_sweeps: continuous ? "continuous" : num(f, "n_sweeps"),
    };
  }

  private validate(): string[] {
    const problems = validateSweepSettings(this.settingsFromForm());
    this.el.problems.textContent = problems.join("; ");
    this.el.start.disabled = problems.length > 0 || this.module === null;
    return problems;
  }

  private async start(): Promise<void> {
    if (!this.module || this.validate().length > 0) return;
    const settings = this.settingsFromForm();
    try {
      const runId = (await this.client.request(this.module, "start_sweep",
                                               { settings })) as number;
      const freqs = (await this.client.request(this.module, "frequencies")) as number[];
      this.state.beginRun(settings, runId, freqs);
      this.el.fitOut.textContent = "";
      this.repaint();
    } catch (e) {
      this.fail("start_sweep", e);
    }
  }

  private async stop(): Promise<void> {
    if (!this.module) return;
    try {
      await this.client.request(this.module, "stop_sweep");
    } catch (e) {
      this.fail("stop_sweep", e);
    }
  }

  private async runFit(): Promise<void> {
    if (!this.module) return;
    try {
      const fit = (await this.client.request(this.module, "fit_resonance")) as FitResult;
      this.state.fit = fit;
      const p = fit.params;
      this.el.fitOut.textContent =
        `f0 ${(p.f0 / 1e9).toFixed(6)} GHz,  fwhm ${(p.fwhm / 1e6).toFixed(3)} MHz,  `
        + `contrast ${(p.c * 100).toFixed(1)}%`
        + (fit.converged ? "" : "  (did not converge)");
      this.repaint();
    } catch (e) {
      this.fail("fit_resonance", e);
    }
  }

  private async save(): Promise<void> {
    if (!this.module) return;
    const recorder = this.recorderLookup();
    if (!recorder) {
      this.notices.show("save: no active recorder module");
      return;
    }
    const s = this.state.settings;
    if (!s || this.state.sum.length === 0) {
      this.notices.show("save: no sweep data yet", "info");
      return;
    }
    const tag = this.el.tag.value || "odmr";
    const metadata: Record<string, unknown> = {
      kind: "odmr",
      f_start_hz: String(s.f_start),
      f_stop_hz: String(s.f_stop),
      n_points: String(s.n_points),
      power_dbm: String(s.power),
      dwell_s: String(s.dwell_s),
      sweeps_done: String(this.state.sweepsDone),
    };
    try {
      const dat = (await this.client.request(recorder, "save_data", {
        tag,
        metadata,
        columns: {
          frequency_hz: this.state.freqs,
          mean_rate: this.state.sum,
        },
      })) as string;
      const svg = (await this.client.request(recorder, "save_plot", {
        tag,
        x: this.state.freqs,
        y: this.state.sum,
        x_label: "frequency (Hz)",
        y_label: "rate (counts/s)",
        ...(this.state.fit ? { fit: this.state.fit } : {}),
      })) as string;
      this.notices.show(`saved ${dat} and ${svg}`, "info");
    } catch (e) {
      this.fail("save", e);
    }
  }

  handleSweep(p: SweepPayload): void {
    if (p.run_id !== this.state.runId) return;
    void this.fetchRecord();
  }

  handleDone(p: SweepDonePayload): void {
    if (p.run_id !== this.state.runId) return;
    this.state.finish(p.sweeps_done);
    void this.fetchRecord();
  }

  /** After (re)connect: adopt whatever run the server is in. */
  async resync(): Promise<void> {
    if (!this.module) return;
    try {
      const status = (await this.client.request(this.module, "get_status")) as {
        running: boolean; run_id: number | null; sweeps_done: number;
      };
      const record = (await this.client.request(this.module, "get_record")) as
        OdmrRecord | null;
      if (!record) return;
      if (status.running && status.run_id !== this.state.runId) {
        const freqs = (await this.client.request(this.module, "frequencies")) as number[];
        this.state.beginRun(record.settings, status.run_id as number, freqs);
      } else if (!status.running) {
        this.state.running = false;
        if (this.state.freqs.length !== record.settings.n_points) {
          const freqs = (await this.client.request(this.module, "frequencies")) as number[];
          this.state.freqs = freqs;
        }
      }
      this.state.applyRecord(record);
      this.repaint();
    } catch {
      /* module gone; the table reflects it */
    }
  }

  /** Serialized get_record fetch; a sweep landing mid-fetch queues one
   *  more instead of piling requests up. */
  private async fetchRecord(): Promise<void> {
    if (!this.module) return;
    if (this.fetching) {
      this.fetchAgain = true;
      return;
    }
    this.fetching = true;
    try {
      do {
        this.fetchAgain = false;
        const record = (await this.client.request(this.module, "get_record")) as
          OdmrRecord | null;
        if (record) {
          this.state.applyRecord(record);
          this.repaint();
        }
      } while (this.fetchAgain);
    } catch (e) {
      this.fail("get_record", e);
    } finally {
      this.fetching = false;
    }
  }

  private fail(op: string, e: unknown): void {
    const kind = e instanceof LabError ? e.kind : "ERROR";
    this.notices.show(`${op}: [${kind}] ${(e as Error).message}`);
  }

  private repaint(): void {
    const st = this.state;
    this.el.counter.textContent = st.running
      ? `running (run ${st.runId}), ${st.sweepsDone} sweeps`
      : `idle, ${st.sweepsDone} sweeps`;

    if (st.freqs.length > 0 && st.sum.length === st.freqs.length) {
      const series: Series[] = [{ xs: st.freqs, ys: st.sum, color: "#0a84ff" }];
      const fit = st.fit;
      if (fit) {
        const fx = grid(st.freqs[0], st.freqs[st.freqs.length - 1],
                        Math.max(st.freqs.length * 4, 64));
        series.push({
          xs: fx,
          ys: fx.map((f) => lorentzDip(fit.params, f)),
          color: "#ff9f0a",
          width: 2,
          dash: [6, 3],
        });
      }
      renderLinePlot(this.el.plot, series, {
        xLabel: "frequency (GHz)",
        yLabel: "rate (counts/s)",
        xTickFormat: (f) => (f / 1e9).toFixed(3),
        markX: fit ? fit.params.f0 : undefined,
      });
    }

    if (st.matrix.length > 0) {
      let min = Infinity;
      let max = -Infinity;
      for (const row of st.matrix) {
        for (const v of row) {
          if (!Number.isFinite(v)) continue;
          if (v < min) min = v;
          if (v > max) max = v;
        }
      }
      renderHeatmap(this.el.matrix, st.matrix, st.matrix[0].length,
                    min <= max ? { min, max } : null);
    }
  }
}
