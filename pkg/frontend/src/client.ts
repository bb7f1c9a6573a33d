/** WebSocket client for the lab server.
 *
 * One socket per page. Requests are matched to responses by id; event
 * messages (anything carrying a "topic") fan out to listeners. On an
 * unexpected drop the client reconnects with doubling backoff and
 * replays the current subscription set, then tells interested panels
 * to re-query whatever state they mirror.
 */

import { LabError, SUBPROTOCOL } from "./protocol.js";
import type { EventMessage } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(code?: number, reason?: string): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string, protocol: string) => SocketLike;

export type ClientStatus = "connecting" | "open" | "reconnecting" | "closed";

interface Pending {
  resolve: (v: unknown) => void;
  reject: (e: Error) => void;
}

const BACKOFF_START_MS = 500;
const BACKOFF_CAP_MS = 30000;

export class LabClient {
  readonly url: string;

  private factory: SocketFactory;
  private sock: SocketLike | null = null;
  private nextId = 1;
  private pending = new Map<number, Pending>();
  private sendQueue: string[] = [];
  private patterns: string[] = [];
  private lastSeq = new Map<string, number>();
  private backoffMs = BACKOFF_START_MS;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;
  private everOpened = false;
  private sockOpen = false;

  private eventListeners: Array<(ev: EventMessage) => void> = [];
  private statusListeners: Array<(s: ClientStatus) => void> = [];
  private reconnectListeners: Array<() => void> = [];

  constructor(url: string, factory?: SocketFactory) {
    this.url = url;
    this.factory = factory
      ?? ((u, proto) => new WebSocket(u, proto) as unknown as SocketLike);
  }

  onEvent(fn: (ev: EventMessage) => void): void {
    this.eventListeners.push(fn);
  }

  onStatus(fn: (s: ClientStatus) => void): void {
    this.statusListeners.push(fn);
  }

  /** Fires after a re-open once subscriptions are replayed. */
  onReconnect(fn: () => void): void {
    this.reconnectListeners.push(fn);
  }

  connect(): void {
    this.stopped = false;
    this.open();
  }

  close(): void {
    this.stopped = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    const sock = this.sock;
    this.sock = null;
    this.sockOpen = false;
    if (sock) {
      sock.onclose = null;
      sock.close();
    }
    this.failPending("connection closed");
    this.emitStatus("closed");
  }

  request(target: string, op: string, params: Record<string, unknown> = {}): Promise<unknown> {
    const id = this.nextId++;
    const frame = JSON.stringify({ id, target, op, params });
    return new Promise<unknown>((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      this.sendOrQueue(frame);
    });
  }

  /** Replaces the active subscription set (server semantics) and
   *  remembers it so reconnects re-establish the same topics. */
  async subscribe(topics: string[]): Promise<void> {
    this.patterns = topics.slice();
    await this.request("@kernel", "subscribe", { topics });
  }

  private open(): void {
    this.emitStatus(this.everOpened ? "reconnecting" : "connecting");
    let sock: SocketLike;
    try {
      sock = this.factory(this.url, SUBPROTOCOL);
    } catch (e) {
      this.scheduleRetry();
      return;
    }
    this.sock = sock;

    sock.onopen = () => {
      const wasReconnect = this.everOpened;
      this.everOpened = true;
      this.sockOpen = true;
      this.backoffMs = BACKOFF_START_MS;
      this.lastSeq.clear();
      this.emitStatus("open");
      if (wasReconnect && this.patterns.length > 0) {
        // Replay before queued traffic so no event window is lost.
        const id = this.nextId++;
        this.pending.set(id, { resolve: () => {}, reject: () => {} });
        sock.send(JSON.stringify({
          id, target: "@kernel", op: "subscribe",
          params: { topics: this.patterns },
        }));
      }
      for (const frame of this.sendQueue.splice(0)) sock.send(frame);
      if (wasReconnect) {
        for (const fn of this.reconnectListeners) fn();
      }
    };

    sock.onmessage = (ev) => {
      this.handleFrame(String(ev.data));
    };

    sock.onclose = () => {
      if (this.sock === sock) {
        this.sock = null;
        this.sockOpen = false;
      }
      this.failPending("connection lost");
      if (!this.stopped) this.scheduleRetry();
    };

    sock.onerror = () => {
      // onclose follows; nothing to do here.
    };
  }

  private scheduleRetry(): void {
    if (this.stopped || this.retryTimer !== null) return;
    this.emitStatus("reconnecting");
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      if (!this.stopped) this.open();
    }, this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_CAP_MS);
  }

  private sendOrQueue(frame: string): void {
    if (this.sock && this.sockOpen) {
      try {
        this.sock.send(frame);
        return;
      } catch {
        // fall through to queue; the close handler will reconnect
      }
    }
    this.sendQueue.push(frame);
  }

  private handleFrame(raw: string): void {
    let msg: Record<string, unknown>;
    try {
      msg = JSON.parse(raw) as Record<string, unknown>;
    } catch {
      return;
    }
    if (typeof msg.topic === "string") {
      const ev = msg as unknown as EventMessage;
      const prev = this.lastSeq.get(ev.topic) ?? 0;
      this.lastSeq.set(ev.topic, ev.seq);
      if (ev.seq !== prev + 1 && prev !== 0) {
        // Gap means the server buffer wrapped; panels resync via queries.
        console.warn(`event gap on ${ev.topic}: ${prev} -> ${ev.seq}`);
      }
      for (const fn of this.eventListeners) fn(ev);
      return;
    }
    if (typeof msg.id === "number") {
      const entry = this.pending.get(msg.id);
      if (!entry) {
        if (msg.id === 0 && msg.error) {
          const err = msg.error as { kind?: string; message?: string };
          console.warn(`protocol violation reported: ${err.message ?? ""}`);
        }
        return;
      }
      this.pending.delete(msg.id);
      if (msg.error !== undefined && msg.error !== null) {
        const err = msg.error as { kind?: string; message?: string };
        entry.reject(new LabError(err.kind ?? "INTERNAL", err.message ?? "error"));
      } else {
        entry.resolve(msg.result);
      }
    }
  }

  private failPending(why: string): void {
    const entries = Array.from(this.pending.values());
    this.pending.clear();
    this.sendQueue.length = 0;
    for (const p of entries) p.reject(new LabError("DISCONNECTED", why));
  }

  private emitStatus(s: ClientStatus): void {
    for (const fn of this.statusListeners) fn(s);
  }
}
