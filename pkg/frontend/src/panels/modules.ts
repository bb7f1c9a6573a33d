/** Module manager: live table of every declared module with lifecycle
 *  controls. State changes arrive as module.state events; the table is
 *  (re)loaded wholesale from list_modules. */

import type { LabClient } from "../client.js";
import type { Notices } from "../notices.js";
import { ModulesState } from "../state/modules.js";
import { LabError } from "../protocol.js";
import type { ModuleRow, StatePayload } from "../protocol.js";

function isActive(state: string): boolean {
  return state === "active_idle" || state === "active_busy";
}

export class ModulesPanel {
  readonly state = new ModulesState();

  private client: LabClient;
  private notices: Notices;
  private tbody: HTMLElement;

  constructor(client: LabClient, notices: Notices, tbody: HTMLElement) {
    this.client = client;
    this.notices = notices;
    this.tbody = tbody;
  }

  /** Find a module to drive by its registry kind. */
  findByKind(kind: string): ModuleRow | undefined {
    return this.state.rows.find((r) => r.kind === kind);
  }

  async refresh(): Promise<void> {
    const rows = (await this.client.request("@kernel", "list_modules")) as ModuleRow[];
    this.state.load(rows);
    this.render();
  }

  handleStateEvent(p: StatePayload): void {
    if (this.state.applyState(p)) this.render();
  }

  private async lifecycle(module: string, op: "activate" | "deactivate"): Promise<void> {
    try {
      await this.client.request("@kernel", op, { module });
    } catch (e) {
      const kind = e instanceof LabError ? e.kind : "ERROR";
      this.notices.show(`${op} ${module}: [${kind}] ${(e as Error).message}`);
    }
  }

  private render(): void {
    this.tbody.textContent = "";
    for (const row of this.state.rows) {
      const tr = document.createElement("tr");

      const name = document.createElement("td");
      name.textContent = row.name;
      const layer = document.createElement("td");
      layer.textContent = row.layer;
      const kind = document.createElement("td");
      kind.textContent = row.kind;

      const state = document.createElement("td");
      const badge = document.createElement("span");
      badge.className = `state state-${row.state}`;
      badge.textContent = row.state;
      state.appendChild(badge);

      const actions = document.createElement("td");
      const up = document.createElement("button");
      up.textContent = "activate";
      up.disabled = isActive(row.state);
      up.addEventListener("click", () => void this.lifecycle(row.name, "activate"));
      const down = document.createElement("button");
      down.textContent = "deactivate";
      down.disabled = !isActive(row.state);
      down.addEventListener("click", () => void this.lifecycle(row.name, "deactivate"));
      actions.append(up, down);

      tr.append(name, layer, kind, state, actions);
      this.tbody.appendChild(tr);
    }
  }
}
