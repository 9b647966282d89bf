/**
 * Camera-arc minimap and latency readouts. Layout math is pure so tests can
 * check marker classification without a canvas.
 */

import { arcCameraPositions, virtualPosition } from "./protocol.js";
import { statsAreStale, ViewerState } from "./state.js";

export type MarkerRole = "idle" | "active" | "reference";

export interface MinimapMarker {
  cameraId: number;
  x: number; // canvas px
  y: number;
  role: MarkerRole;
}

export interface MinimapLayout {
  markers: MinimapMarker[];
  virtual: { x: number; y: number };
}

export function minimapLayout(
  state: ViewerState,
  width: number,
  height: number,
): MinimapLayout | null {
  if (!state.hello) return null;
  const { n_cameras, spacing_m, span_deg } = state.hello;
  const cams = arcCameraPositions(n_cameras, spacing_m, span_deg);
  const vpos = virtualPosition(
    n_cameras, spacing_m, span_deg, state.input.t, state.input.radial);

  const xs = cams.map((c) => c.x).concat(vpos.x, 0);
  const zs = cams.map((c) => c.z).concat(vpos.z, 0);
  const minX = Math.min(...xs) - 0.3;
  const maxX = Math.max(...xs) + 0.3;
  const minZ = Math.min(...zs) - 0.3;
  const maxZ = Math.max(...zs) + 0.3;
  const scale = Math.min(width / (maxX - minX), height / (maxZ - minZ));
  const toCanvas = (x: number, z: number) => ({
    x: (x - minX) * scale,
    y: height - (z - minZ) * scale,
  });

  const active = new Set(state.activeSet);
  const refs = new Set(state.references);
  const markers = cams.map((c, i) => {
    const p = toCanvas(c.x, c.z);
    const role: MarkerRole = refs.has(i) ? "reference"
      : active.has(i) ? "active" : "idle";
    return { cameraId: i, x: p.x, y: p.y, role };
  });
  return { markers, virtual: toCanvas(vpos.x, vpos.z) };
}

const ROLE_COLORS: Record<MarkerRole, string> = {
  idle: "#555",
  active: "#2b8cff",
  reference: "#ffd23f",
};

export function drawOverlay(
  ctx: CanvasRenderingContext2D,
  state: ViewerState,
  width: number,
  height: number,
  nowMs: number,
): void {
  ctx.clearRect(0, 0, width, height);
  const layout = minimapLayout(state, width, height - 34);
  if (!layout) return;

  for (const m of layout.markers) {
    ctx.beginPath();
    ctx.arc(m.x, m.y, m.role === "idle" ? 3 : 5, 0, 2 * Math.PI);
    ctx.fillStyle = ROLE_COLORS[m.role];
    ctx.fill();
    ctx.fillStyle = "#999";
    ctx.font = "9px monospace";
    ctx.fillText(String(m.cameraId), m.x - 3, m.y - 8);
  }
  ctx.beginPath();
  ctx.arc(layout.virtual.x, layout.virtual.y, 4, 0, 2 * Math.PI);
  ctx.strokeStyle = "#ff5470";
  ctx.lineWidth = 2;
  ctx.stroke();

  const stale = statsAreStale(state, nowMs);
  ctx.fillStyle = stale ? "#666" : "#ddd";
  ctx.font = "12px monospace";
  const mtp = state.stats?.mtp_ms != null ? state.stats.mtp_ms.toFixed(1) : "--";
  const e2e = state.stats?.e2e_ms != null ? state.stats.e2e_ms.toFixed(1) : "--";
  ctx.fillText(`MTP ${mtp} ms   e2e ${e2e} ms`, 6, height - 20);
  ctx.fillText(
    `active [${state.activeSet.join(" ")}]  refs [${state.references.join(" ")}]`,
    6, height - 6);
}
