"""Pipeline orchestration.

Capture-server units (acquire, correct, segment, code, packetize), the
edge-server unit (reassemble, decode, store, render, steer the active camera
set), virtual-camera trajectories, latency and bitrate accounting, and the
offline batch runner. Everything runs in simulated time on one deterministic
event loop; ``serve.py`` paces the same machinery against the wall clock.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import depthcodec, depthproc, scenegen, synthesis, transport
from .core import (
    CameraCalibration,
    CameraPose,
    ColorFrame,
    DepthFrame,
    MvdFrame,
    Validity,
    camera_distance,
)
from .mvdio import MvdWriter
from .scenegen import DepthErrorSpec, SceneDescription, arc_pose


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class StageLatencies:
    """Simulated per-stage processing times.

    Defaults: 30 fps capture, worst-case capture-server frame processing,
    per-stream decode, and frame synthesis. The end-to-end figure these
    defaults produce (~90-140 ms plus network) is intentionally published
    rather than asserted; see README for how it relates to the 252 ms budget.
    """

    frame_period_us: float = 1e6 / 30.0
    cs_processing_us: float = 19_470.0
    decode_us: float = 16_500.0
    synthesis_us: float = 30_000.0
    extra_pipeline_us: float = 0.0  # opt-in budget for unmodeled buffering


@dataclass(frozen=True)
class PipelineConfig:
    preset: str = "simple"
    n_cameras: int = 9
    camera_spacing_m: float = 0.270
    arc_span_deg: float = 60.0
    width: int = 128
    height: int = 96
    hfov_deg: float = 60.0
    cameras_per_cs: int = 3
    n_tx: int = 5
    reference_count: int = 3
    mtu: int = 1500
    ip_overhead: int = 28  # UDP/IP bytes reserved out of the MTU budget
    z_near: float = 0.5
    z_far: float = 6.5
    seed: int = 0
    duration_s: float = 12.0
    bg_removal: bool = True
    depth_correction: bool = True
    hole_closing: bool = True
    idr_period: int = 30
    clock_offset_bound_us: float = 0.0
    stage: StageLatencies = StageLatencies()
    link: transport.LinkConfig = transport.LinkConfig()
    synthesis: synthesis.SynthesisConfig = synthesis.SynthesisConfig()
    error_alpha: float = 0.02
    error_beta: float = 0.92
    error_noise_m: float = 0.01  # ~0.5% of mid-scene depth
    error_hole_px: int = 2
    render_stub: bool = False  # timing-only render loop (no image synthesis)

    @property
    def app_mtu(self) -> int:
        return self.mtu - self.ip_overhead

    @property
    def fps(self) -> float:
        return 1e6 / self.stage.frame_period_us


# ---------------------------------------------------------------------------
# trajectories

TRAJECTORY_KINDS = ("swing", "step_in_out", "still_half", "still_third")


@dataclass(frozen=True)
class ArcGeometry:
    """Arc parameters recovered from a rig built by ``build_camera_arc``."""

    radius: float
    phi_first: float
    phi_last: float

    @staticmethod
    def from_rig(rig: Sequence[CameraCalibration]) -> "ArcGeometry":
        c_first = rig[0].pose.center
        c_last = rig[-1].pose.center
        radius = float(np.linalg.norm(c_first))
        return ArcGeometry(
            radius=radius,
            phi_first=math.atan2(c_first[0], -c_first[2]),
            phi_last=math.atan2(c_last[0], -c_last[2]),
        )

    def pose_for(self, arc_t: float, radial: float = 0.0) -> CameraPose:
        """Pose on (or radially offset from) the arc; arc_t in [0, 1].

        ``radial`` moves the camera toward the scene (positive steps in),
        keeping the original orientation of the arc point.
        """
        phi = self.phi_first + arc_t * (self.phi_last - self.phi_first)
        base = arc_pose(self.radius, phi)
        if radial == 0.0:
            return base
        direction = -base.center / np.linalg.norm(base.center)
        return CameraPose(rotation=base.rotation,
                          center=base.center + radial * direction)


@dataclass(frozen=True)
class VirtualTrajectory:
    """Scripted virtual-camera path parameterized over the arc."""

    kind: str
    arc: ArcGeometry
    duration_s: float = 12.0
    step_amplitude_m: float = 0.4
    still_pair: Tuple[int, int] = (3, 4)
    n_cameras: int = 9

    def params_at(self, t: float) -> Tuple[float, float]:
        """(arc parameter, radial offset) at time t seconds."""
        tau = (t % self.duration_s) / self.duration_s
        if self.kind == "swing":
            return (2 * tau if tau <= 0.5 else 2 - 2 * tau, 0.0)
        if self.kind == "step_in_out":
            return (0.5, self.step_amplitude_m * math.sin(2 * math.pi * tau))
        i, j = self.still_pair
        frac = 0.5 if self.kind == "still_half" else 1.0 / 3.0
        arc_t = (i + frac * (j - i)) / (self.n_cameras - 1)
        return (arc_t, 0.0)

    def pose_at(self, t: float) -> CameraPose:
        arc_t, radial = self.params_at(t)
        if self.kind in ("still_half", "still_third"):
            # chord interpolation between the two reference cameras with
            # arc-angle interpolated orientation
            i, j = self.still_pair
            frac = 0.5 if self.kind == "still_half" else 1.0 / 3.0
            span = self.arc.phi_last - self.arc.phi_first
            phi_i = self.arc.phi_first + span * i / (self.n_cameras - 1)
            phi_j = self.arc.phi_first + span * j / (self.n_cameras - 1)
            ci = arc_pose(self.arc.radius, phi_i).center
            cj = arc_pose(self.arc.radius, phi_j).center
            rot = arc_pose(self.arc.radius, phi_i + frac * (phi_j - phi_i)).rotation
            return CameraPose(rotation=rot, center=ci + frac * (cj - ci))
        return self.arc.pose_for(arc_t, radial)


def make_trajectory(kind: str, rig: Sequence[CameraCalibration],
                    duration_s: float = 12.0,
                    still_pair: Tuple[int, int] = (3, 4)) -> VirtualTrajectory:
    if kind not in TRAJECTORY_KINDS:
        raise ValueError(f"unknown trajectory {kind!r}; expected {TRAJECTORY_KINDS}")
    return VirtualTrajectory(kind=kind, arc=ArcGeometry.from_rig(rig),
                             duration_s=duration_s, still_pair=still_pair,
                             n_cameras=len(rig))


# ---------------------------------------------------------------------------
# frame store


class FrameStore:
    """Latest complete (color, depth) pairs per camera, bounded window.

    Rendering only ever reads pairs that share one sequence number.
    """

    def __init__(self, window: int = 8):
        self.window = window
        self._colors: Dict[int, Dict[int, ColorFrame]] = {}
        self._depths: Dict[int, Dict[int, DepthFrame]] = {}
        self.inserted = 0
        self.evicted_unused = 0
        self._used_seqs: Dict[int, set] = {}

    def insert_color(self, camera_id: int, seq: int, frame: ColorFrame) -> None:
        self._colors.setdefault(camera_id, {})[seq] = frame
        self.inserted += 1
        self._trim(camera_id)

    def insert_depth(self, camera_id: int, seq: int, frame: DepthFrame) -> None:
        self._depths.setdefault(camera_id, {})[seq] = frame
        self.inserted += 1
        self._trim(camera_id)

    def _trim(self, camera_id: int) -> None:
        for table in (self._colors, self._depths):
            seqs = table.get(camera_id, {})
            while len(seqs) > self.window:
                oldest = min(seqs)
                if oldest not in self._used_seqs.get(camera_id, set()):
                    self.evicted_unused += 1
                del seqs[oldest]

    def latest_complete(self, camera_id: int) -> Optional[Tuple[int, ColorFrame, DepthFrame]]:
        colors = self._colors.get(camera_id, {})
        depths = self._depths.get(camera_id, {})
        common = set(colors) & set(depths)
        if not common:
            return None
        seq = max(common)
        self._used_seqs.setdefault(camera_id, set()).add(seq)
        return seq, colors[seq], depths[seq]


# ---------------------------------------------------------------------------
# latency / bitrate accounting


@dataclass
class FrameRecord:
    frame_id: int
    display_time_us: float
    viewpoint_update_id: int
    active: List[int]
    references: List[int]
    ref_sequences: Dict[int, int]
    e2e_ms_per_ref: Dict[int, float]
    starved: bool = False

    @property
    def e2e_ms(self) -> float:
        return max(self.e2e_ms_per_ref.values()) if self.e2e_ms_per_ref else float("nan")


@dataclass
class MtpRecord:
    update_id: int
    arrival_us: float
    displayed_us: float

    @property
    def mtp_ms(self) -> float:
        return (self.displayed_us - self.arrival_us) / 1e3


@dataclass
class LatencyReport:
    frames: List[FrameRecord] = field(default_factory=list)
    mtp: List[MtpRecord] = field(default_factory=list)
    bytes_by_stream: Dict[Tuple[int, int], int] = field(default_factory=dict)
    payload_bytes_by_stream: Dict[Tuple[int, int], int] = field(default_factory=dict)
    events: List[Tuple[float, str, str]] = field(default_factory=list)
    duration_s: float = 0.0

    def log(self, time_us: float, kind: str, detail: str = "") -> None:
        self.events.append((time_us, kind, detail))

    def bitrates_mbps(self) -> Dict[str, float]:
        if self.duration_s <= 0:
            return {}
        out = {}
        total = 0.0
        for (cam, media), nbytes in sorted(self.bytes_by_stream.items()):
            name = f"cam{cam:02d}_{'color' if media == transport.MEDIA_COLOR else 'depth'}"
            mbps = nbytes * 8.0 / self.duration_s / 1e6
            out[name] = mbps
            total += mbps
        out["aggregate"] = total
        return out

    def summary(self) -> Dict:
        e2e = [f.e2e_ms for f in self.frames if f.e2e_ms_per_ref]
        mtp = [m.mtp_ms for m in self.mtp]
        return {
            "frames_displayed": len(self.frames),
            "starved_frames": sum(f.starved for f in self.frames),
            "e2e_ms": {
                "mean": float(np.mean(e2e)) if e2e else None,
                "min": float(np.min(e2e)) if e2e else None,
                "max": float(np.max(e2e)) if e2e else None,
            },
            "mtp_ms": {
                "count": len(mtp),
                "mean": float(np.mean(mtp)) if mtp else None,
                "min": float(np.min(mtp)) if mtp else None,
                "max": float(np.max(mtp)) if mtp else None,
            },
            "bitrates_mbps": self.bitrates_mbps(),
        }


# ---------------------------------------------------------------------------
# capture server unit


class CaptureServer:
    """Acquisition + coding unit handling a subset of the rig's cameras.

    Per frame period and per active camera: render the synthetic capture,
    degrade it like a real stereo head, correct depth, classify and strip BG
    depth, quantize, pack, encode, and packetize. Inactive cameras are
    skipped entirely (that is the point of the adaptive scheme).
    """

    def __init__(self, cs_id: int, cameras: List[CameraCalibration],
                 scene: SceneDescription, config: PipelineConfig,
                 clock_offset_us: float = 0.0):
        self.cs_id = cs_id
        self.cameras = {c.id: c for c in cameras}
        self.scene = scene
        self.cfg = config
        self.clock_offset_us = clock_offset_us
        self.active: set[int] = set(self.cameras)
        self.depth_range = depthcodec.DepthRange(config.z_near, config.z_far)
        self.error_spec = DepthErrorSpec(
            alpha_true=config.error_alpha, beta_true=config.error_beta,
            noise_amplitude=config.error_noise_m, hole_width=config.error_hole_px,
        )
        self.correction: Dict[int, depthproc.CorrectionModel] = {}
        self.bg_models: Dict[int, depthproc.GaussianBgModel] = {}
        self.seq: Dict[int, int] = {cid: 0 for cid in self.cameras}
        self.captured: Dict[int, int] = {cid: 0 for cid in self.cameras}
        self.skipped: Dict[int, int] = {cid: 0 for cid in self.cameras}
        self.real_time_violations = 0

    def calibrate(self, control_points_per_cam: int = 200, warmup_frames: int = 30,
                  rng_seed: int = 0) -> None:
        """One-time setup: fit depth correction, train the BG color model."""
        cams = list(self.cameras.values())
        obs = scenegen.emit_control_points(
            self.scene, cams, self.error_spec, control_points_per_cam,
            seed=rng_seed + 101 * self.cs_id,
        )
        for cid in self.cameras:
            mine = [o for o in obs if o.camera_id == cid]
            self.correction[cid] = depthproc.fit_depth_correction(mine)
        bg_scene = replace(self.scene, objects=())
        for cid, calib in self.cameras.items():
            model = depthproc.GaussianBgModel(
                width=calib.intrinsics.width, height=calib.intrinsics.height,
                warmup_frames=warmup_frames,
            )
            for i in range(warmup_frames):
                frame = scenegen.render_ground_truth(
                    bg_scene, calib, min(i / self.scene.fps, self.scene.duration))
                depthproc.bg_train(model, frame.color)
            self.bg_models[cid] = model

    def set_active(self, command: transport.CameraSetCommand) -> None:
        self.active = {cid for cid in command.camera_ids if cid in self.cameras}

    def capture(self, camera_id: int, t_us: float, rng_seed: int
                ) -> Optional[Tuple[List[transport.MediaPacket], Dict]]:
        """Run the per-frame chain for one camera; None when inactive."""
        if camera_id not in self.active:
            self.skipped[camera_id] += 1
            return None
        calib = self.cameras[camera_id]
        t_s = (t_us / 1e6) % self.scene.duration
        mvd, fg_mask = scenegen.render_with_mask(self.scene, calib, t_s)
        stamp = int(t_us + self.clock_offset_us)

        depth = scenegen.degrade_depth(mvd.depth, self.error_spec,
                                       seed=rng_seed, fg_mask=fg_mask)
        if self.cfg.depth_correction:
            depth = depthproc.correct_depth(depth, self.correction[camera_id])
        if self.cfg.bg_removal:
            mask = depthproc.classify_fg(self.bg_models[camera_id], mvd.color)
            depth = depthproc.remove_bg_depth(depth, mask)

        disparity = depthcodec.quantize12(depth, self.depth_range)
        packed = depthcodec.pack_yuv420(disparity)
        enc_depth = depthcodec.encode_lossless(packed, timestamp_us=stamp)
        enc_color = depthcodec.encode_color(
            ColorFrame(mvd.color.width, mvd.color.height, mvd.color.pixels, stamp))

        seq = self.seq[camera_id]
        self.seq[camera_id] += 1
        self.captured[camera_id] += 1
        packets = packetize_frame(enc_color, camera_id, seq, self.cfg.app_mtu)
        packets += packetize_frame(enc_depth, camera_id, seq, self.cfg.app_mtu)
        meta = {
            "seq": seq,
            "idr": seq % self.cfg.idr_period == 0,
            "color_payload": len(enc_color.payload),
            "depth_payload": len(enc_depth.payload),
        }
        return packets, meta


def packetize_frame(frame: depthcodec.EncodedFrame, camera_id: int, seq: int,
                    app_mtu: int) -> List[transport.MediaPacket]:
    return transport.packetize(frame, camera_id, seq, app_mtu)


# ---------------------------------------------------------------------------
# edge server unit


class EdgeServer:
    """Receives all streams, keeps the frame store, and renders virtual views."""

    def __init__(self, rig: Sequence[CameraCalibration], scene: SceneDescription,
                 config: PipelineConfig, report: LatencyReport):
        self.rig = list(rig)
        self.rig_by_id = {c.id: c for c in self.rig}
        self.scene = scene
        self.cfg = config
        self.report = report
        self.store = FrameStore()
        self.reassembler = transport.Reassembler(
            timeout_us=2 * config.stage.frame_period_us)
        self.depth_range = depthcodec.DepthRange(config.z_near, config.z_far)
        self.bg_depth: Dict[int, DepthFrame] = {
            c.id: scenegen.bg_depth_model(scene, c) for c in self.rig
        }
        self.active: List[int] = list(range(min(config.n_tx, len(self.rig))))
        self.viewpoint: CameraPose = self.rig[len(self.rig) // 2].pose
        self.viewpoint_update_id: int = 0
        self.viewpoint_arrival_us: float = 0.0
        self._next_update_id: int = 1
        self._mtp_pending: Optional[Tuple[int, float]] = None
        self.frame_counter = 0
        self.dropped_frames = 0
        self.contributing: Dict[Tuple[int, int], bool] = {}

    # -- stream ingestion ---------------------------------------------------

    def on_packet(self, packet: transport.MediaPacket, now_us: float
                  ) -> List[transport.CompletedFrame]:
        """Feed one delivered packet; returns frames completing reassembly."""
        done = []
        for event in self.reassembler.push(packet, now_us):
            if isinstance(event, transport.CompletedFrame):
                done.append(event)
            else:
                self.dropped_frames += 1
                self.report.log(now_us, "frame_dropped",
                                f"cam{event.camera_id} seq{event.sequence} {event.reason}")
        return done

    def on_decoded(self, completed: transport.CompletedFrame) -> None:
        frame = completed.frame
        if frame.media_type == depthcodec.MEDIA_COLOR:
            self.store.insert_color(completed.camera_id, completed.sequence,
                                    depthcodec.decode_color(frame))
        else:
            packed = depthcodec.decode_lossless(frame)
            disparity = depthcodec.unpack_yuv420(packed)
            depth = depthcodec.dequantize12(disparity, self.depth_range,
                                            timestamp_us=frame.timestamp_us)
            self.store.insert_depth(completed.camera_id, completed.sequence, depth)

    # -- viewpoint ----------------------------------------------------------

    def update_viewpoint(self, pose: CameraPose, now_us: float) -> int:
        """Atomically replace the render target; returns the update id."""
        if not (np.all(np.isfinite(pose.center)) and np.all(np.isfinite(pose.rotation))):
            raise ValueError("viewpoint pose must be finite")
        update_id = self._next_update_id
        self._next_update_id += 1
        self.viewpoint = pose
        self.viewpoint_update_id = update_id
        self.viewpoint_arrival_us = now_us
        self._mtp_pending = (update_id, now_us)  # last writer wins
        return update_id

    def desired_active(self) -> List[int]:
        return transport.select_cameras(self.viewpoint, self.rig,
                                        min(self.cfg.n_tx, len(self.rig)),
                                        current=self.active)

    # -- rendering ----------------------------------------------------------

    def render_tick(self, tick_us: float, clock_estimates: Dict[int, float],
                    camera_to_cs: Dict[int, int]
                    ) -> Tuple[Optional[ColorFrame], FrameRecord]:
        """Render at the current viewpoint; returns the frame and its record."""
        update_id = self.viewpoint_update_id
        mtp_pending = self._mtp_pending
        self._mtp_pending = None

        refs_wanted = transport.select_references(
            self.viewpoint, self.rig, self.active,
            min(self.cfg.reference_count, len(self.active)))
        display_us = tick_us + self.cfg.stage.synthesis_us \
            + self.cfg.stage.extra_pipeline_us

        inputs = {}
        ref_seqs = {}
        e2e = {}
        for rid in refs_wanted:
            got = self.store.latest_complete(rid)
            if got is None:
                continue
            seq, color, depth = got
            if self.cfg.hole_closing:
                depth = depthproc.bilateral_close_holes(depth, color)
            inputs[rid] = synthesis.CameraStreamInputs(
                calib=self.rig_by_id[rid], live_color=color, live_depth=depth,
                bg_depth=self.bg_depth[rid])
            ref_seqs[rid] = seq
            self.contributing[(rid, seq)] = True
            cs = camera_to_cs[rid]
            capture_es_us = color.timestamp_us - clock_estimates.get(cs, 0.0)
            e2e[rid] = (display_us - capture_es_us) / 1e3

        starved = not inputs
        if inputs and len(inputs) < len(refs_wanted):
            missing = sorted(set(refs_wanted) - set(inputs))
            self.report.log(tick_us, "degraded",
                            f"rendering with {len(inputs)} of "
                            f"{len(refs_wanted)} references; no frames from "
                            f"{missing}")
        frame: Optional[ColorFrame] = None
        if not self.cfg.render_stub:
            if starved:
                hole = np.zeros((self.cfg.height, self.cfg.width, 3), dtype=np.uint8)
                hole[:] = self.cfg.synthesis.hole_color
                frame = ColorFrame(self.cfg.width, self.cfg.height, hole,
                                   int(display_us))
            else:
                virtual = CameraCalibration(id=255, intrinsics=self.rig[0].intrinsics,
                                            pose=self.viewpoint)
                frame = synthesize_with_config(virtual, inputs, list(inputs),
                                               self.cfg.synthesis)
        if starved:
            self.report.log(tick_us, "starvation", "no complete reference frames")

        record = FrameRecord(
            frame_id=self.frame_counter,
            display_time_us=display_us,
            viewpoint_update_id=update_id,
            active=sorted(self.active),
            references=list(inputs) if inputs else [],
            ref_sequences=ref_seqs,
            e2e_ms_per_ref=e2e,
            starved=starved,
        )
        self.frame_counter += 1
        self.report.frames.append(record)
        if mtp_pending is not None:
            self.report.mtp.append(MtpRecord(mtp_pending[0], mtp_pending[1],
                                             display_us))
        return frame, record


def synthesize_with_config(virtual, inputs, refs, cfg):
    return synthesis.synthesize_view(virtual, inputs, refs, cfg)


# ---------------------------------------------------------------------------
# the simulation


@dataclass(frozen=True, order=True)
class _Event:
    time_us: float
    order: int
    kind: str = field(compare=False)
    payload: tuple = field(compare=False, default=())


class Simulation:
    """Deterministic event loop tying capture servers, network, and edge server.

    Media flows CS -> ES over one link per capture server; CameraSetCommand
    control messages flow back over per-CS return links. All latency figures
    are simulated time.
    """

    def __init__(self, config: PipelineConfig,
                 trajectory: Optional[VirtualTrajectory] = None,
                 on_display: Optional[Callable[[float, ColorFrame, FrameRecord], None]] = None):
        self.cfg = config
        self.report = LatencyReport()
        self.scene = scenegen.make_scene(config.preset, duration=config.duration_s,
                                         fps=config.fps)
        self.rig = scenegen.build_camera_arc(
            config.n_cameras, config.camera_spacing_m, config.arc_span_deg,
            width=config.width, height=config.height, hfov_deg=config.hfov_deg)
        self.trajectory = trajectory
        self.on_display = on_display

        n_cs = -(-config.n_cameras // config.cameras_per_cs)
        rng = np.random.default_rng(config.seed)
        offsets = {j: float(rng.uniform(-config.clock_offset_bound_us,
                                        config.clock_offset_bound_us))
                   if config.clock_offset_bound_us > 0 else 0.0
                   for j in range(n_cs)}
        self.clock = transport.ClockSync(offsets_us=offsets,
                                         bound_us=0.0, seed=config.seed)
        self.clock_estimates = self.clock.estimates()

        self.capture_servers: List[CaptureServer] = []
        self.camera_to_cs: Dict[int, int] = {}
        for j in range(n_cs):
            cams = [c for c in self.rig
                    if j * config.cameras_per_cs <= c.id < (j + 1) * config.cameras_per_cs]
            cs = CaptureServer(j, cams, self.scene, config,
                               clock_offset_us=offsets[j])
            if not config.render_stub:
                cs.calibrate(rng_seed=config.seed)
            self.capture_servers.append(cs)
            for c in cams:
                self.camera_to_cs[c.id] = j

        self.network = transport.NetworkSim(seed=config.seed)
        for j in range(n_cs):
            self.network.add_link(f"cs{j}->es", config.link)
            self.network.add_link(f"es->cs{j}", config.link)

        self.edge = EdgeServer(self.rig, self.scene, config, self.report)
        if trajectory is not None:
            self.edge.viewpoint = trajectory.pose_at(0.0)
        # capture servers start out knowing the initial active set
        self.edge.active = transport.select_cameras(
            self.edge.viewpoint, self.rig, min(config.n_tx, len(self.rig)))
        for cs in self.capture_servers:
            cs.set_active(transport.CameraSetCommand.from_ids(self.edge.active, 0))

        self._heap: List[_Event] = []
        self._order = 0
        self._control_seq = 0
        self._tick_k = 0
        self.cs_active_log: List[Tuple[float, frozenset]] = [
            (0.0, frozenset(self.edge.active))
        ]
        self.command_log: List[Tuple[float, frozenset]] = []

    # -- event plumbing ------------------------------------------------------

    def _push(self, time_us: float, kind: str, payload: tuple = ()) -> None:
        self._order += 1
        heapq.heappush(self._heap, _Event(time_us, self._order, kind, payload))

    def schedule_viewpoint(self, time_us: float, pose: CameraPose) -> None:
        """Queue an externally-steered viewpoint update for simulated time."""
        self._push(time_us, "viewpoint", (pose,))

    def advance_to(self, until_us: float) -> None:
        """Process every event with simulated time <= until_us."""
        period = self.cfg.stage.frame_period_us
        while self._tick_k * period <= until_us:
            t = self._tick_k * period
            self._push(t, "capture", ())
            self._push(t, "render", ())
            if self.trajectory is not None and self._tick_k > 0:
                self._push(t - 1.0, "viewpoint",
                           (self.trajectory.pose_at(t / 1e6),))
            self._tick_k += 1

        while True:
            net_t = self.network.next_event_time()
            heap_t = self._heap[0].time_us if self._heap else None
            if net_t is not None and net_t > until_us:
                net_t = None
            if heap_t is not None and heap_t > until_us:
                heap_t = None
            if net_t is None and heap_t is None:
                break
            if net_t is not None and (heap_t is None or net_t <= heap_t):
                for d in self.network.step(net_t):
                    self._on_delivery(d)
            else:
                event = heapq.heappop(self._heap)
                handler = getattr(self, f"_on_{event.kind}")
                handler(event.time_us, *event.payload)

    def run(self, until_s: float) -> LatencyReport:
        self.advance_to(until_s * 1e6)
        self.report.duration_s = until_s
        return self.report

    # -- event handlers ------------------------------------------------------

    def _on_capture(self, t_us: float) -> None:
        cfg = self.cfg
        for cs in self.capture_servers:
            for cid in sorted(cs.cameras):
                seed = (cfg.seed * 1_000_003 + cid * 7919 + int(t_us)) & 0x7FFFFFFF
                if cfg.render_stub:
                    continue
                result = cs.capture(cid, t_us, seed)
                if result is None:
                    continue
                packets, meta = result
                send_at = t_us + cfg.stage.cs_processing_us
                self._push(send_at, "send", (cs.cs_id, tuple(packets), meta, cid))

    def _on_send(self, t_us: float, cs_id: int, packets: tuple, meta: dict,
                 camera_id: int) -> None:
        link = f"cs{cs_id}->es"
        for p in packets:
            self.network.send(link, p, t_us)
            key = (p.camera_id, p.media_type)
            self.report.bytes_by_stream[key] = \
                self.report.bytes_by_stream.get(key, 0) + p.size
        for media, size in ((transport.MEDIA_COLOR, meta["color_payload"]),
                            (transport.MEDIA_DEPTH, meta["depth_payload"])):
            key = (camera_id, media)
            self.report.payload_bytes_by_stream[key] = \
                self.report.payload_bytes_by_stream.get(key, 0) + size

    def _on_delivery(self, delivery: transport.Delivery) -> None:
        packet = delivery.packet
        if delivery.link.startswith("es->"):
            cs_id = int(delivery.link[len("es->cs"):])
            cmd = transport.CameraSetCommand.deserialize(packet.payload,
                                                         packet.timestamp_us)
            self.capture_servers[cs_id].set_active(cmd)
            union = set()
            for cs in self.capture_servers:
                union |= cs.active
            self.cs_active_log.append((delivery.time_us, frozenset(union)))
            return
        for completed in self.edge.on_packet(packet, delivery.time_us):
            self._push(delivery.time_us + self.cfg.stage.decode_us, "decoded",
                       (completed,))

    def _on_decoded(self, t_us: float, completed: transport.CompletedFrame) -> None:
        self.edge.on_decoded(completed)

    def _on_viewpoint(self, t_us: float, pose: CameraPose) -> None:
        self.edge.update_viewpoint(pose, t_us)

    def _on_render(self, t_us: float) -> None:
        desired = self.edge.desired_active()
        if set(desired) != set(self.edge.active):
            self.edge.active = desired
            cmd = transport.CameraSetCommand.from_ids(desired, int(t_us))
            self._control_seq += 1
            pkt = transport.control_packet(cmd, self._control_seq)
            for j in range(len(self.capture_servers)):
                self.network.send(f"es->cs{j}", pkt, t_us)
            self.command_log.append((t_us, frozenset(desired)))
            self.report.log(t_us, "camera_set", str(sorted(desired)))

        frame, record = self.edge.render_tick(t_us, self.clock_estimates,
                                              self.camera_to_cs)
        if self.on_display is not None and frame is not None:
            self.on_display(record.display_time_us, frame, record)

    # -- accounting ----------------------------------------------------------

    def conservation(self) -> Dict[str, int]:
        captured = sum(sum(cs.captured.values()) for cs in self.capture_servers)
        skipped = sum(sum(cs.skipped.values()) for cs in self.capture_servers)
        return {
            "captured": captured,
            "skipped": skipped,
            "packets_sent": self.network.sent,
            "packets_delivered": self.network.delivered,
            "packets_lost": self.network.dropped,
            "packets_in_flight": self.network.in_flight,
            "frames_dropped": self.edge.dropped_frames,
            "store_inserted": self.edge.store.inserted,
        }


# ---------------------------------------------------------------------------
# batch runner


def run_batch(
    config: PipelineConfig,
    trajectory_kind: str,
    out_dir: str | Path,
    duration_s: Optional[float] = None,
    write_frames: bool = True,
) -> LatencyReport:
    """Offline end-to-end run: simulate, write frames and metrics to disk."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    duration = duration_s if duration_s is not None else config.duration_s

    rig = scenegen.build_camera_arc(config.n_cameras, config.camera_spacing_m,
                                    config.arc_span_deg, width=config.width,
                                    height=config.height, hfov_deg=config.hfov_deg)
    traj = make_trajectory(trajectory_kind, rig, duration_s=config.duration_s)

    writer = MvdWriter(out / "frames", config.fps, config.width, config.height) \
        if write_frames else None

    def on_display(display_us: float, frame: ColorFrame, record: FrameRecord):
        if writer is not None:
            mvd = MvdFrame(
                camera_id=15,  # virtual camera slot in the container
                color=ColorFrame(frame.width, frame.height, frame.pixels,
                                 int(display_us)),
                depth=DepthFrame(frame.width, frame.height,
                                 np.zeros((frame.height, frame.width), np.float32),
                                 np.full((frame.height, frame.width),
                                         Validity.INVALID, np.uint8),
                                 int(display_us)),
            )
            writer.write_frame(record.frame_id, mvd)

    sim = Simulation(config, trajectory=traj, on_display=on_display)
    report = sim.run(duration)
    if writer is not None:
        writer.close()

    with open(out / "frames.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_id", "display_time_us", "update_id", "active",
                    "references", "e2e_ms", "starved"])
        for f in report.frames:
            w.writerow([f.frame_id, f"{f.display_time_us:.1f}",
                        f.viewpoint_update_id,
                        " ".join(map(str, f.active)),
                        " ".join(map(str, f.references)),
                        f"{f.e2e_ms:.3f}" if f.e2e_ms_per_ref else "",
                        int(f.starved)])
    (out / "summary.json").write_text(json.dumps(report.summary(), indent=2))
    return report
