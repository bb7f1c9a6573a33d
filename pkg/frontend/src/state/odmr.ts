/** ODMR panel state, fed exclusively from server records. The sweep
 *  event is only a doorbell: on each one the panel re-queries get_record
 *  so matrix, running mean and sweep count all come from the server. */

import type { FitResult, OdmrRecord, SweepSettings } from "../protocol.js";

export class OdmrState {
  settings: SweepSettings | null = null;
  runId: number | null = null;
  running = false;
  sweepsDone = 0;
  matrix: number[][] = [];
  sum: number[] = [];
  freqs: number[] = [];
  fit: FitResult | null = null;

  beginRun(settings: SweepSettings, runId: number, freqs: number[]): void {
    this.settings = settings;
    this.runId = runId;
    this.running = true;
    this.sweepsDone = 0;
    this.matrix = [];
    this.sum = [];
    this.freqs = freqs.slice();
    this.fit = null;
  }

  applyRecord(rec: OdmrRecord): void {
    this.settings = rec.settings;
    this.matrix = rec.matrix.map((r) => r.slice());
    this.sum = rec.sum.slice();
    this.sweepsDone = rec.sweeps_done;
  }

  finish(sweepsDone: number): void {
    this.running = false;
    this.sweepsDone = sweepsDone;
  }
}

/* Fitted-curve evaluation for overlays. These reproduce the server's
   model formulas with the server's fitted parameters; they exist so a
   smooth curve can be drawn, not to compute results. */

export function lorentzDip(params: Record<string, number>, f: number): number {
  const h = params.fwhm / 2.0;
  const d = f - params.f0;
  return params.offset * (1.0 - params.c * (h * h) / (d * d + h * h));
}

export function gauss1d(params: Record<string, number>, x: number): number {
  const u = x - params.x0;
  return params.offset
    + params.A * Math.exp(-(u * u) / (2.0 * params.sigma * params.sigma));
}
