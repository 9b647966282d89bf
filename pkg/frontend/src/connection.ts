/**
 * WebSocket session against the edge service: message dispatch, viewpoint
 * throttling with monotone update ids, and automatic reconnect with fresh
 * state after a server restart.
 */

import { parseFrameMessage, parseServerJson, ViewpointMessage } from "./protocol.js";
import {
  applyAck,
  applyFrame,
  applyHello,
  applyInput,
  applyStats,
  initialState,
  ViewerState,
} from "./state.js";

/** The subset of the browser WebSocket API the session needs; the `ws`
 *  package used by the node tests implements it too. */
export interface WebSocketLike {
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export interface SessionOptions {
  /** injectable for tests / node; defaults to the browser WebSocket */
  wsFactory?: (url: string) => WebSocketLike;
  /** minimum ms between viewpoint sends (display refresh) */
  sendIntervalMs?: number;
  reconnectDelayMs?: number;
  now?: () => number;
}

export class ViewerSession {
  state: ViewerState = initialState();
  onchange: ((state: ViewerState) => void) | null = null;

  private url: string;
  private ws: WebSocketLike | null = null;
  private wsFactory: (url: string) => WebSocketLike;
  private sendIntervalMs: number;
  private reconnectDelayMs: number;
  private now: () => number;
  private nextUpdateId = 1;
  private lastSendMs = -Infinity;
  private pending: { t: number; radial: number } | null = null;
  private flushTimer: ReturnType<typeof setTimeout> | null = null;
  private closed = false;

  constructor(url: string, options: SessionOptions = {}) {
    this.url = url;
    this.wsFactory =
      options.wsFactory ?? ((u) => new WebSocket(u) as unknown as WebSocketLike);
    this.sendIntervalMs = options.sendIntervalMs ?? 1000 / 60;
    this.reconnectDelayMs = options.reconnectDelayMs ?? 2000;
    this.now = options.now ?? (() => Date.now());
    this.connect();
  }

  private emit(): void {
    this.onchange?.(this.state);
  }

  private connect(): void {
    this.state = { ...initialState(), input: this.state.input };
    this.emit();
    const ws = this.wsFactory(this.url);
    this.ws = ws;
    ws.binaryType = "arraybuffer";
    ws.onopen = () => {
      this.state = { ...this.state, status: "connected" };
      this.emit();
    };
    ws.onmessage = (ev) => this.handleMessage(ev.data);
    ws.onerror = () => {
      this.state = { ...this.state, status: "error" };
      this.emit();
    };
    ws.onclose = () => {
      if (this.closed) return;
      this.state = { ...this.state, status: "closed" };
      this.emit();
      setTimeout(() => {
        if (!this.closed) this.connect();
      }, this.reconnectDelayMs);
    };
  }

  private handleMessage(data: unknown): void {
    const nowMs = this.now();
    if (typeof data === "string") {
      const msg = parseServerJson(data);
      if (msg.type === "hello") this.state = applyHello(this.state, msg);
      else if (msg.type === "stats") this.state = applyStats(this.state, msg, nowMs);
      else this.state = applyAck(this.state, msg);
    } else if (data instanceof ArrayBuffer) {
      this.state = applyFrame(this.state, parseFrameMessage(data), nowMs);
    } else {
      return; // Blob payloads are converted by the caller in browser builds
    }
    this.emit();
  }

  /** Queue a viewpoint; sends are coalesced to the display refresh rate.
   *  Returns the update id the change will ship with. */
  sendViewpoint(t: number, radial: number): number {
    this.state = applyInput(this.state, t, radial);
    this.pending = { t: this.state.input.t, radial };
    const id = this.nextUpdateId;
    const since = this.now() - this.lastSendMs;
    if (since >= this.sendIntervalMs) {
      this.flush();
    } else if (this.flushTimer === null) {
      this.flushTimer = setTimeout(() => {
        this.flushTimer = null;
        this.flush();
      }, this.sendIntervalMs - since);
    }
    this.emit();
    return id;
  }

  private flush(): void {
    if (!this.pending || !this.ws || this.state.status !== "connected") return;
    const id = this.nextUpdateId++;
    const msg: ViewpointMessage = {
      type: "viewpoint",
      t: this.pending.t,
      radial: this.pending.radial,
      update_id: id,
    };
    this.pending = null;
    this.lastSendMs = this.now();
    this.state = { ...this.state, lastSentUpdateId: id };
    this.ws.send(JSON.stringify(msg));
    this.emit();
  }

  close(): void {
    this.closed = true;
    if (this.flushTimer !== null) clearTimeout(this.flushTimer);
    this.ws?.close();
  }
}
