"""Live viewer service.

Paces the simulated pipeline against the wall clock and speaks the viewer
protocol over WebSocket:

* client -> server: JSON text ``{"type": "viewpoint", "t": 0..1,
  "radial": meters, "update_id": n}``; the server replies with a JSON ack.
* server -> client: binary frame messages -- big-endian u32 frame id, u64
  display timestamp (us), u16 active-set bitmask, f32 motion-to-photon ms,
  then the rendered view as PNG -- interleaved with JSON stat messages
  ``{"type": "stats", ...}``.

Wall-clock mode makes no latency claims; the reported delays are still the
simulated-time figures.
"""

from __future__ import annotations

import asyncio
import io
import json
import struct
from typing import Optional, Set

import numpy as np
from PIL import Image

from .core import ColorFrame
from .pipeline import (
    ArcGeometry,
    FrameRecord,
    PipelineConfig,
    Simulation,
)

FRAME_HEADER = struct.Struct(">IQHf")

CLOSE_PROTOCOL_ERROR = 1002
CLOSE_UNSUPPORTED = 1003


def encode_frame_message(frame_id: int, timestamp_us: int, active_mask: int,
                         mtp_ms: float, png: bytes) -> bytes:
    return FRAME_HEADER.pack(frame_id, timestamp_us, active_mask, mtp_ms) + png


def decode_frame_message(data: bytes):
    frame_id, ts, mask, mtp = FRAME_HEADER.unpack_from(data)
    return frame_id, ts, mask, mtp, data[FRAME_HEADER.size:]


def png_bytes(frame: ColorFrame) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(frame.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


class ViewerService:
    """One pipeline simulation shared by every connected viewer."""

    def __init__(self, config: PipelineConfig, host: str = "127.0.0.1",
                 port: int = 8765):
        self.cfg = config
        self.host = host
        self.port = port
        self.sim = Simulation(config, trajectory=None,
                              on_display=self._on_display)
        self.arc = ArcGeometry.from_rig(self.sim.rig)
        self._clients: Set = set()
        self._last: Optional[tuple] = None  # (display_us, frame, record)
        self._frame_event = asyncio.Event()
        self._sim_time_us = 0.0
        self._stop = asyncio.Event()

    # -- pipeline side -------------------------------------------------------

    def _on_display(self, display_us: float, frame: ColorFrame,
                    record: FrameRecord) -> None:
        self._last = (display_us, frame, record)

    def _advance_one_frame(self) -> None:
        self._sim_time_us += self.cfg.stage.frame_period_us
        self.sim.advance_to(self._sim_time_us)

    # -- protocol side -------------------------------------------------------

    def _stats_message(self, record: FrameRecord) -> str:
        mtp = self.sim.report.mtp[-1].mtp_ms if self.sim.report.mtp else None
        return json.dumps({
            "type": "stats",
            "frame_id": record.frame_id,
            "active": record.active,
            "references": record.references,
            "e2e_ms": record.e2e_ms if record.e2e_ms_per_ref else None,
            "mtp_ms": mtp,
            "starved": record.starved,
            "n_tx": self.cfg.n_tx,
            "n_cameras": self.cfg.n_cameras,
        })

    async def _broadcast(self) -> None:
        if self._last is None or not self._clients:
            return
        display_us, frame, record = self._last
        mask = 0
        for cid in record.active:
            mask |= 1 << cid
        mtp = self.sim.report.mtp[-1].mtp_ms if self.sim.report.mtp else -1.0
        blob = encode_frame_message(record.frame_id, int(display_us), mask,
                                    mtp, png_bytes(frame))
        stats = self._stats_message(record)
        dead = []
        for ws in self._clients:
            try:
                await ws.send(blob)
                await ws.send(stats)
            except Exception:
                dead.append(ws)
        for ws in dead:
            self._clients.discard(ws)

    async def _handle_client(self, ws) -> None:
        self._clients.add(ws)
        await ws.send(json.dumps({
            "type": "hello",
            "n_cameras": self.cfg.n_cameras,
            "n_tx": self.cfg.n_tx,
            "spacing_m": self.cfg.camera_spacing_m,
            "span_deg": self.cfg.arc_span_deg,
            "width": self.cfg.width,
            "height": self.cfg.height,
            "fps": self.cfg.fps,
        }))
        try:
            async for message in ws:
                if isinstance(message, (bytes, bytearray)):
                    await ws.close(CLOSE_UNSUPPORTED, "binary client messages unsupported")
                    break
                try:
                    msg = json.loads(message)
                except json.JSONDecodeError:
                    await ws.close(CLOSE_PROTOCOL_ERROR, "malformed JSON")
                    break
                if msg.get("type") != "viewpoint":
                    await ws.close(CLOSE_PROTOCOL_ERROR,
                                   f"unknown message type {msg.get('type')!r}")
                    break
                try:
                    t = float(msg["t"])
                    radial = float(msg.get("radial", 0.0))
                except (KeyError, TypeError, ValueError):
                    await ws.close(CLOSE_PROTOCOL_ERROR, "bad viewpoint fields")
                    break
                t = min(max(t, 0.0), 1.0)
                pose = self.arc.pose_for(t, radial)
                update_id = self.sim.edge.update_viewpoint(pose, self._sim_time_us)
                await ws.send(json.dumps({
                    "type": "ack",
                    "update_id": msg.get("update_id"),
                    "server_update_id": update_id,
                    "t": t,
                    "radial": radial,
                }))
        finally:
            self._clients.discard(ws)

    async def _render_loop(self) -> None:
        loop = asyncio.get_running_loop()
        period_s = self.cfg.stage.frame_period_us / 1e6
        start = loop.time()
        k = 0
        while not self._stop.is_set():
            k += 1
            target = start + k * period_s
            # sleep(0) when behind schedule still yields to socket handling
            await asyncio.sleep(max(0.0, target - loop.time()))
            self._advance_one_frame()
            await self._broadcast()

    async def serve_forever(self) -> None:
        from websockets.asyncio.server import serve

        async with serve(self._handle_client, self.host, self.port,
                         max_size=None):
            print(f"viewer endpoint on ws://{self.host}:{self.port} "
                  f"({self.cfg.n_cameras} cameras, preset {self.cfg.preset})",
                  flush=True)
            await self._render_loop()

    def stop(self) -> None:
        self._stop.set()


def serve_viewer(config: PipelineConfig, host: str = "127.0.0.1",
                 port: int = 8765) -> None:
    """Blocking entry point: run the edge service plus viewer endpoint."""
    service = ViewerService(config, host, port)
    try:
        asyncio.run(service.serve_forever())
    except KeyboardInterrupt:
        pass
