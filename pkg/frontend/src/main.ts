/** Browser entry: wires the sliders, frame display, and overlay canvas. */

import { ViewerSession } from "./connection.js";
import { drawOverlay } from "./overlay.js";
import { ViewerState } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const frameImg = el<HTMLImageElement>("frame");
const overlay = el<HTMLCanvasElement>("overlay");
const tSlider = el<HTMLInputElement>("arc-t");
const radialSlider = el<HTMLInputElement>("radial");
const statusLine = el<HTMLSpanElement>("status");

const url = `ws://${location.hostname}:${Number(location.port) || 8765}`;
const session = new ViewerSession(url.replace(/^http/, "ws"));

let lastObjectUrl: string | null = null;

function render(state: ViewerState): void {
  statusLine.textContent =
    state.status === "connected"
      ? `connected | update #${state.lastAckedUpdateId}` +
        (state.input.clamped ? " | t clamped" : "")
      : state.status;
  statusLine.className = state.status;

  if (state.frame) {
    const blob = new Blob([state.frame.png.slice()], { type: "image/png" });
    const next = URL.createObjectURL(blob);
    frameImg.src = next;
    if (lastObjectUrl) URL.revokeObjectURL(lastObjectUrl);
    lastObjectUrl = next;
  }
  const ctx = overlay.getContext("2d");
  if (ctx) drawOverlay(ctx, state, overlay.width, overlay.height, Date.now());
}

session.onchange = render;

function pushViewpoint(): void {
  session.sendViewpoint(Number(tSlider.value), Number(radialSlider.value));
}
tSlider.addEventListener("input", pushViewpoint);
radialSlider.addEventListener("input", pushViewpoint);

// dragging on the frame steers the arc parameter, like the original swipe UI
let dragging = false;
frameImg.addEventListener("pointerdown", (ev) => {
  dragging = true;
  frameImg.setPointerCapture(ev.pointerId);
});
frameImg.addEventListener("pointerup", () => {
  dragging = false;
});
frameImg.addEventListener("pointermove", (ev) => {
  if (!dragging) return;
  const rect = frameImg.getBoundingClientRect();
  const t = (ev.clientX - rect.left) / rect.width;
  tSlider.value = String(Math.min(Math.max(t, 0), 1));
  pushViewpoint();
});

setInterval(() => render(session.state), 500); // refresh stale-stats greying
