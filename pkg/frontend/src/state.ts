/**
 * Viewer state. Everything shown in the UI comes either from server
 * messages or from locally-echoed input, and the two are kept apart so the
 * overlay can never fabricate server state.
 */

import {
  AckMessage,
  FrameMessage,
  HelloMessage,
  StatsMessage,
  maskToIds,
} from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "error" | "closed";

export interface ViewerState {
  status: ConnectionStatus;
  hello: HelloMessage | null;
  /** local input echo */
  input: { t: number; radial: number; clamped: boolean };
  lastSentUpdateId: number;
  lastAckedUpdateId: number;
  lastServerUpdateId: number;
  /** latest server-reported data; the overlay reads only this */
  frame: FrameMessage | null;
  frameReceivedAtMs: number;
  stats: StatsMessage | null;
  statsReceivedAtMs: number;
  /** active set as last reported by the server (frame bitmask) */
  activeSet: number[];
  references: number[];
}

export function initialState(): ViewerState {
  return {
    status: "connecting",
    hello: null,
    input: { t: 0.5, radial: 0, clamped: false },
    lastSentUpdateId: 0,
    lastAckedUpdateId: 0,
    lastServerUpdateId: 0,
    frame: null,
    frameReceivedAtMs: 0,
    stats: null,
    statsReceivedAtMs: 0,
    activeSet: [],
    references: [],
  };
}

export function applyFrame(
  state: ViewerState,
  frame: FrameMessage,
  nowMs: number,
): ViewerState {
  return {
    ...state,
    frame,
    frameReceivedAtMs: nowMs,
    activeSet: maskToIds(frame.activeMask),
  };
}

export function applyStats(
  state: ViewerState,
  stats: StatsMessage,
  nowMs: number,
): ViewerState {
  return { ...state, stats, statsReceivedAtMs: nowMs, references: stats.references };
}

export function applyHello(state: ViewerState, hello: HelloMessage): ViewerState {
  return { ...state, hello, status: "connected" };
}

export function applyAck(state: ViewerState, ack: AckMessage): ViewerState {
  const acked = typeof ack.update_id === "number" ? ack.update_id : state.lastAckedUpdateId;
  if (acked < state.lastAckedUpdateId) {
    return state; // stale ack from before a reconnect
  }
  return {
    ...state,
    lastAckedUpdateId: acked,
    lastServerUpdateId: ack.server_update_id,
  };
}

export function applyInput(
  state: ViewerState,
  t: number,
  radial: number,
): ViewerState {
  const clamped = t < 0 || t > 1;
  return {
    ...state,
    input: { t: Math.min(Math.max(t, 0), 1), radial, clamped },
  };
}

/** Stats older than this are greyed out in the overlay. */
export const STATS_STALE_MS = 1000;

export function statsAreStale(state: ViewerState, nowMs: number): boolean {
  return state.stats === null || nowMs - state.statsReceivedAtMs > STATS_STALE_MS;
}
