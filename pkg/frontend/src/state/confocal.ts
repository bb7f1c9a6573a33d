/** Confocal panel state. Rows arrive as events and are stored verbatim;
 *  nothing here derives data, it only mirrors what the server sent. */

import type {
  OptimizerResult, Position3, RowPayload, ScanDonePayload, ScanImage,
  ScanSettings,
} from "../protocol.js";

export type Row = Array<number | null>;

export class ConfocalState {
  settings: ScanSettings | null = null;
  scanId: number | null = null;
  /** One entry per slow-axis line; null until its event arrives. */
  rows: Array<Row | null> = [];
  rowsComplete = 0;
  scanning = false;
  cursor: Position3 | null = null;
  optimized: OptimizerResult | null = null;

  beginScan(settings: ScanSettings, scanId: number): void {
    this.settings = settings;
    this.scanId = scanId;
    this.rows = new Array<Row | null>(settings.resolution[1]).fill(null);
    this.rowsComplete = 0;
    this.scanning = true;
  }

  /** Returns true when the event belonged to the displayed scan. */
  applyRow(p: RowPayload): boolean {
    if (!this.scanning || p.scan_id !== this.scanId) return false;
    if (p.row_index < 0 || p.row_index >= this.rows.length) return false;
    this.rows[p.row_index] = p.values.slice();
    this.rowsComplete = this.rows.reduce((n, r) => n + (r ? 1 : 0), 0);
    return true;
  }

  applyDone(p: ScanDonePayload): boolean {
    if (p.scan_id !== this.scanId) return false;
    this.scanning = false;
    this.rowsComplete = p.rows_complete;
    return true;
  }

  /** Replace everything with a server-side image (resync path). Rows the
   *  scan never reached come back as NaN padding; keep those as gaps. */
  loadImage(img: ScanImage): void {
    this.settings = img.settings;
    this.rows = img.data.map((row, i) => (i < img.rows_complete ? row.slice() : null));
    this.rowsComplete = img.rows_complete;
    this.scanning = false;
  }

  /** Min/max over the values present, for color normalization. */
  valueRange(): { min: number; max: number } | null {
    let min = Infinity;
    let max = -Infinity;
    for (const row of this.rows) {
      if (!row) continue;
      for (const v of row) {
        if (v === null || !Number.isFinite(v)) continue;
        if (v < min) min = v;
        if (v > max) max = v;
      }
    }
    return min <= max ? { min, max } : null;
  }
}
