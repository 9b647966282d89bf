/**
 * Wire protocol of the edge-server viewer endpoint.
 *
 * Server -> client:
 *  - binary frame messages: big-endian u32 frame id, u64 display timestamp
 *    (microseconds), u16 active-camera bitmask, f32 motion-to-photon ms,
 *    then the rendered view as a PNG blob;
 *  - JSON text messages: {type:"hello"...} once after connect,
 *    {type:"stats"...} per frame, {type:"ack"...} per viewpoint update.
 *
 * Client -> server: JSON {type:"viewpoint", t, radial, update_id}.
 */

export const FRAME_HEADER_BYTES = 18;

export interface FrameMessage {
  frameId: number;
  timestampUs: bigint;
  activeMask: number;
  mtpMs: number;
  png: Uint8Array;
}

export interface HelloMessage {
  type: "hello";
  n_cameras: number;
  n_tx: number;
  spacing_m: number;
  span_deg: number;
  width: number;
  height: number;
  fps: number;
}

export interface StatsMessage {
  type: "stats";
  frame_id: number;
  active: number[];
  references: number[];
  e2e_ms: number | null;
  mtp_ms: number | null;
  starved: boolean;
  n_tx: number;
  n_cameras: number;
}

export interface AckMessage {
  type: "ack";
  update_id: number | null;
  server_update_id: number;
  t: number;
  radial: number;
}

export type ServerJson = HelloMessage | StatsMessage | AckMessage;

export interface ViewpointMessage {
  type: "viewpoint";
  t: number;
  radial: number;
  update_id: number;
}

export function parseFrameMessage(data: ArrayBuffer): FrameMessage {
  if (data.byteLength < FRAME_HEADER_BYTES) {
    throw new Error(`frame message too short: ${data.byteLength} bytes`);
  }
  const view = new DataView(data);
  return {
    frameId: view.getUint32(0, false),
    timestampUs: view.getBigUint64(4, false),
    activeMask: view.getUint16(12, false),
    mtpMs: view.getFloat32(14, false),
    png: new Uint8Array(data, FRAME_HEADER_BYTES),
  };
}

export function encodeFrameMessage(msg: FrameMessage): ArrayBuffer {
  const buf = new ArrayBuffer(FRAME_HEADER_BYTES + msg.png.byteLength);
  const view = new DataView(buf);
  view.setUint32(0, msg.frameId, false);
  view.setBigUint64(4, msg.timestampUs, false);
  view.setUint16(12, msg.activeMask, false);
  view.setFloat32(14, msg.mtpMs, false);
  new Uint8Array(buf, FRAME_HEADER_BYTES).set(msg.png);
  return buf;
}

export function maskToIds(mask: number): number[] {
  const ids: number[] = [];
  for (let i = 0; i < 16; i++) {
    if ((mask >> i) & 1) ids.push(i);
  }
  return ids;
}

export function parseServerJson(text: string): ServerJson {
  const msg = JSON.parse(text);
  if (msg.type !== "hello" && msg.type !== "stats" && msg.type !== "ack") {
    throw new Error(`unknown server message type: ${msg.type}`);
  }
  return msg as ServerJson;
}

/** Camera positions on the capture arc, for the minimap. Mirrors the rig
 *  builder: cameras sit on a circle around the scene origin, adjacent
 *  centers `spacing` apart, first-to-last spanning `spanDeg` degrees. */
export interface ArcPoint {
  x: number;
  z: number;
}

export function arcRadius(n: number, spacing: number, spanDeg: number): number {
  const gap = (spanDeg * Math.PI) / 180 / (n - 1);
  return spacing / (2 * Math.sin(gap / 2));
}

export function arcCameraPositions(
  n: number,
  spacing: number,
  spanDeg: number,
): ArcPoint[] {
  const r = arcRadius(n, spacing, spanDeg);
  const gap = (spanDeg * Math.PI) / 180 / (n - 1);
  const out: ArcPoint[] = [];
  for (let i = 0; i < n; i++) {
    const phi = (i - (n - 1) / 2) * gap;
    out.push({ x: r * Math.sin(phi), z: -r * Math.cos(phi) });
  }
  return out;
}

/** Virtual-camera position for an arc parameter plus radial step-in. */
export function virtualPosition(
  n: number,
  spacing: number,
  spanDeg: number,
  t: number,
  radial: number,
): ArcPoint {
  const r = arcRadius(n, spacing, spanDeg);
  const span = (spanDeg * Math.PI) / 180;
  const phi = (t - 0.5) * span;
  const scale = (r - radial) / r;
  return { x: r * Math.sin(phi) * scale, z: -r * Math.cos(phi) * scale };
}
