/** Page assembly: one client, three panels, an event router. */

import { LabClient } from "./client.js";
import { Notices } from "./notices.js";
import { ModulesPanel } from "./panels/modules.js";
import { ConfocalPanel } from "./panels/confocal.js";
import { OdmrPanel } from "./panels/odmr.js";
import type {
  LogPayload, RowPayload, ScanDonePayload, StatePayload, SweepDonePayload,
  SweepPayload,
} from "./protocol.js";

const DEFAULT_URL = "ws://127.0.0.1:8765/ws";
const TOPICS = ["module.state", "log.error", "confocal.*", "odmr.*"];

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

const urlInput = $("url") as HTMLInputElement;
const connectBtn = $("connect") as HTMLButtonElement;
const statusEl = $("status");
const notices = new Notices($("notices"));

urlInput.value = localStorage.getItem("labkit.url") ?? DEFAULT_URL;

let client: LabClient | null = null;
let connected = false;

function activeOf(modules: ModulesPanel, kind: string): string | null {
  const row = modules.state.rows.find(
    (r) => r.kind === kind
      && (r.state === "active_idle" || r.state === "active_busy"),
  );
  return row ? row.name : null;
}

function setup(url: string): LabClient {
  const c = new LabClient(url);

  const modules = new ModulesPanel(c, notices, $("mod-tbody"));
  const confocal = new ConfocalPanel(c, notices, {
    form: $("cf-form") as HTMLFormElement,
    problems: $("cf-problems"),
    start: $("cf-start") as HTMLButtonElement,
    stop: $("cf-stop") as HTMLButtonElement,
    optimize: $("cf-opt") as HTMLButtonElement,
    save: $("cf-save") as HTMLButtonElement,
    tag: $("cf-tag") as HTMLInputElement,
    canvas: $("cf-canvas") as HTMLCanvasElement,
    overlay: $("cf-overlay") as HTMLCanvasElement,
    progress: $("cf-progress"),
    cursorOut: $("cf-cursor"),
    optOut: $("cf-optout"),
    zplot: $("cf-zplot") as HTMLCanvasElement,
  });
  const odmr = new OdmrPanel(c, notices, {
    form: $("od-form") as HTMLFormElement,
    problems: $("od-problems"),
    start: $("od-start") as HTMLButtonElement,
    stop: $("od-stop") as HTMLButtonElement,
    fit: $("od-fit") as HTMLButtonElement,
    save: $("od-save") as HTMLButtonElement,
    tag: $("od-tag") as HTMLInputElement,
    plot: $("od-plot") as HTMLCanvasElement,
    matrix: $("od-matrix") as HTMLCanvasElement,
    counter: $("od-counter"),
    fitOut: $("od-fitout"),
  });

  const lookup = (kind: string) => () => activeOf(modules, kind);
  confocal.recorderLookup = lookup("recorder");
  odmr.recorderLookup = lookup("recorder");

  function bind(): void {
    confocal.setModule(activeOf(modules, "confocal_logic"));
    odmr.setModule(activeOf(modules, "odmr_logic"));
  }

  async function bootstrap(): Promise<void> {
    try {
      await c.subscribe(TOPICS);
      await modules.refresh();
      bind();
      await confocal.resync();
      await odmr.resync();
    } catch (e) {
      notices.show(`bootstrap: ${(e as Error).message}`);
    }
  }

  c.onStatus((s) => {
    statusEl.textContent = s;
    statusEl.className = `status status-${s}`;
    connected = s === "open";
    connectBtn.textContent = s === "closed" ? "connect" : "disconnect";
    if (s === "open") void bootstrap();
  });

  c.onEvent((ev) => {
    switch (ev.topic) {
      case "module.state":
        modules.handleStateEvent(ev.payload as StatePayload);
        bind();
        break;
      case "log.error": {
        const p = ev.payload as LogPayload;
        notices.show(`${p.source}: ${p.message}`);
        break;
      }
      case "confocal.row":
        confocal.handleRow(ev.payload as RowPayload);
        break;
      case "confocal.done":
        confocal.handleDone(ev.payload as ScanDonePayload);
        break;
      case "odmr.sweep":
        odmr.handleSweep(ev.payload as SweepPayload);
        break;
      case "odmr.done":
        odmr.handleDone(ev.payload as SweepDonePayload);
        break;
      default:
        break;
    }
  });

  return c;
}

connectBtn.addEventListener("click", () => {
  if (client === null) {
    localStorage.setItem("labkit.url", urlInput.value);
    urlInput.disabled = true; // one server per page; reload to switch
    client = setup(urlInput.value);
    client.connect();
    return;
  }
  if (connected) {
    client.close();
  } else {
    client.connect();
  }
});
