/** Wire types for the labkit.v1 protocol. Shapes mirror docs/protocol.md. */

export const SUBPROTOCOL = "labkit.v1";

export interface Position3 {
  x: number;
  y: number;
  z: number;
}

export interface ScanSettings {
  plane: "xy" | "xz";
  center: Position3;
  extent: [number, number]; // width, height in um
  resolution: [number, number]; // nx, ny pixels
  dwell_s: number;
}

// NaN serializes as null on the wire, so unset pixels arrive as null.
export interface ScanImage {
  settings: ScanSettings;
  data: (number | null)[][];
  rows_complete: number;
}

export interface SweepSettings {
  f_start: number; // Hz
  f_stop: number; // Hz
  n_points: number;
  power: number; // dBm
  dwell_s: number;
  n_sweeps: number | "continuous";
}

export interface OdmrRecord {
  settings: SweepSettings;
  matrix: number[][]; // completed sweeps x n_points, counts/s
  sum: number[]; // running mean over all completed sweeps
  sweeps_done: number;
}

export interface FitResult {
  model: string;
  params: Record<string, number>;
  stderr: Record<string, number | null>;
  residual_norm: number;
  converged: boolean;
  n_iter: number;
}

export interface OptimizerResult {
  refined: Position3;
  fit_xy: FitResult | null;
  fit_z: FitResult | null;
  accepted: boolean;
}

export type LifecycleState =
  | "unloaded"
  | "loaded"
  | "active_idle"
  | "active_busy"
  | "error";

export interface ModuleRow {
  name: string;
  layer: "hardware" | "logic" | "gui";
  kind: string;
  state: LifecycleState;
}

export interface WireError {
  kind: string;
  message: string;
}

export interface EventMessage {
  topic: string;
  seq: number;
  payload: any;
}

/* Event payloads, per topic. */

export interface RowPayload {
  scan_id: number;
  row_index: number;
  values: number[];
}

export interface ScanDonePayload {
  scan_id: number;
  rows_complete: number;
}

export interface SweepPayload {
  run_id: number;
  sweep_index: number;
  values: number[];
}

export interface SweepDonePayload {
  run_id: number;
  sweeps_done: number;
}

export interface StatePayload {
  module: string;
  state: LifecycleState;
}

export interface LogPayload {
  timestamp: string;
  level: string;
  source: string;
  message: string;
}

export interface MicrowaveState {
  frequency: number;
  power: number;
  on: boolean;
}

/** Server-side operation failure, re-raised client-side by kind. */
export class LabError extends Error {
  readonly kind: string;

  constructor(kind: string, message: string) {
    super(message);
    this.name = "LabError";
    this.kind = kind;
  }
}
