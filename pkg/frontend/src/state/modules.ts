import type { LifecycleState, ModuleRow, StatePayload } from "../protocol.js";

/** Mirror of the kernel's module table. */
export class ModulesState {
  rows: ModuleRow[] = [];

  load(rows: ModuleRow[]): void {
    this.rows = rows.map((r) => ({ ...r }));
  }

  /** Returns true when a known module changed state. */
  applyState(p: StatePayload): boolean {
    const row = this.rows.find((r) => r.name === p.module);
    if (!row || row.state === p.state) return false;
    row.state = p.state as LifecycleState;
    return true;
  }

  get(name: string): ModuleRow | undefined {
    return this.rows.find((r) => r.name === name);
  }
}
