"""Deterministic synthetic scene renderer standing in for physical cameras.

Produces exact multiview-plus-depth data by analytic ray casting (axis-aligned
room interior, boxes, spheres), injects a configurable per-camera depth error,
and emits the calibration control-point observations used to fit the depth
correction model.

Everything is a pure function of (scene, camera, t, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import (
    CameraCalibration,
    CameraIntrinsics,
    CameraPose,
    ColorFrame,
    DepthFrame,
    MvdFrame,
    Validity,
    pixel_rays,
)

PRESETS = ("simple", "medium", "complex")

# mean BG-pixel ratios the presets are tuned to reproduce over the 9-camera rig
PRESET_BG_RATIO = {"simple": 0.80, "medium": 0.75, "complex": 0.57}


@dataclass(frozen=True)
class Room:
    """Axis-aligned box interior; cameras sit inside it."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def bounds(self) -> np.ndarray:
        return np.array(
            [
                [self.x_min, self.x_max],
                [self.y_min, self.y_max],
                [self.z_min, self.z_max],
            ]
        )

    def contains(self, p: Sequence[float], margin: float = 0.0) -> bool:
        x, y, z = p
        return (
            self.x_min + margin <= x <= self.x_max - margin
            and self.y_min + margin <= y <= self.y_max - margin
            and self.z_min + margin <= z <= self.z_max - margin
        )


@dataclass(frozen=True)
class SceneObject:
    """Foreground box or sphere with scripted sinusoidal drift.

    ``size`` is the full extent per axis for boxes; for spheres only
    ``size[0]`` is used, as the diameter.
    """

    kind: str  # "box" | "sphere"
    center: Tuple[float, float, float]
    size: Tuple[float, float, float]
    base_color: Tuple[float, float, float]
    motion_amp: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    motion_freq_hz: float = 0.0
    motion_phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("box", "sphere"):
            raise ValueError(f"unknown object kind {self.kind!r}")

    def center_at(self, t: float) -> np.ndarray:
        c = np.asarray(self.center, dtype=np.float64)
        if self.motion_freq_hz == 0.0:
            return c
        a = np.asarray(self.motion_amp, dtype=np.float64)
        return c + a * math.sin(2 * math.pi * self.motion_freq_hz * t + self.motion_phase)


@dataclass(frozen=True)
class SceneDescription:
    preset: str
    room: Room
    objects: Tuple[SceneObject, ...]
    duration: float = 12.0
    fps: float = 30.0
    homogeneous_bg: bool = False

    def __post_init__(self):
        if self.duration <= 0 or self.fps <= 0:
            raise ValueError("duration and fps must be positive")
        # FG objects (over their whole motion envelope) must stay inside the room
        for obj in self.objects:
            half = max(self.size_envelope(obj))
            for corner in (-1.0, 1.0):
                c = np.asarray(obj.center) + corner * np.asarray(obj.motion_amp)
                if not self.room.contains(c, margin=half):
                    raise ValueError(f"object {obj.kind} leaves the room volume")

    @staticmethod
    def size_envelope(obj: SceneObject) -> Tuple[float, float, float]:
        if obj.kind == "sphere":
            r = obj.size[0] / 2.0
            return (r, r, r)
        return tuple(s / 2.0 for s in obj.size)


@dataclass(frozen=True)
class DepthErrorSpec:
    """Per-camera systematic quadratic depth error plus discretization noise.

    The true depth z and the erroneous single-camera estimate q are tied by
    z / q = alpha_true * q + beta_true, so applying the quadratic correction
    with the same (alpha, beta) recovers z exactly (up to noise).
    """

    alpha_true: float = 0.0  # 1/meters
    beta_true: float = 1.0
    noise_amplitude: float = 0.0  # meters, uniform in [-a, +a]
    hole_width: int = 0  # px band outside FG silhouettes marked Invalid

    def __post_init__(self):
        if self.beta_true <= 0:
            raise ValueError("beta_true must be positive")
        if self.hole_width < 0 or self.noise_amplitude < 0:
            raise ValueError("noise amplitude and hole width must be non-negative")


@dataclass(frozen=True)
class ControlPointObservation:
    camera_id: int
    u: float
    v: float
    z_cam: float  # erroneous single-camera depth, meters
    z_calib: float  # robust multi-camera depth, meters

    def __post_init__(self):
        if self.z_cam <= 0 or self.z_calib <= 0:
            raise ValueError("control point depths must be positive")


# ---------------------------------------------------------------------------
# camera arc


def build_camera_arc(
    n: int,
    spacing: float,
    span_deg: float,
    *,
    width: int = 160,
    height: int = 120,
    hfov_deg: float = 60.0,
) -> list[CameraCalibration]:
    """Cameras on a circular arc, optical axes converging on the arc center.

    Adjacent camera centers are ``spacing`` apart (chord length) and the first
    and last cameras subtend ``span_deg`` at the arc's center of curvature,
    which sits at the world origin. The arc lies in the world XZ plane.
    """
    if n < 2:
        raise ValueError("need at least 2 cameras")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if not (0 < span_deg < 180):
        raise ValueError("span must be in (0, 180) degrees")

    gap = math.radians(span_deg) / (n - 1)
    radius = spacing / (2.0 * math.sin(gap / 2.0))
    fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
    intr = CameraIntrinsics(fx=fx, fy=fx, cx=width / 2.0, cy=height / 2.0,
                            width=width, height=height)

    cams = []
    for i in range(n):
        phi = (i - (n - 1) / 2.0) * gap
        cams.append(
            CameraCalibration(
                id=i,
                intrinsics=intr,
                pose=arc_pose(radius, phi),
            )
        )
    return cams


def arc_pose(radius: float, phi: float) -> CameraPose:
    """Pose on the arc circle at angle ``phi``, looking at the origin."""
    center = np.array([radius * math.sin(phi), 0.0, -radius * math.cos(phi)])
    return look_at_pose(center, np.zeros(3))


def look_at_pose(center: np.ndarray, target: np.ndarray) -> CameraPose:
    """World->camera pose at ``center`` with the optical axis through ``target``."""
    center = np.asarray(center, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - center
    nf = np.linalg.norm(fwd)
    if nf == 0:
        raise ValueError("camera center and look-at target coincide")
    z = fwd / nf
    down = np.array([0.0, 1.0, 0.0])
    x = np.cross(down, z)
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise ValueError("optical axis may not be vertical")
    x /= nx
    y = np.cross(z, x)
    return CameraPose(rotation=np.stack([x, y, z]), center=center)


def arc_radius(n: int, spacing: float, span_deg: float) -> float:
    gap = math.radians(span_deg) / (n - 1)
    return spacing / (2.0 * math.sin(gap / 2.0))


# ---------------------------------------------------------------------------
# ray casting

_HOMOGENEOUS_BG = np.array([146.0, 146.0, 148.0])


def _room_exit(origin: np.ndarray, dirs: np.ndarray, room: Room):
    """Exit distance and face id for rays leaving the room interior."""
    bounds = room.bounds()
    t_exit = np.full(dirs.shape[:-1], np.inf)
    face = np.zeros(dirs.shape[:-1], dtype=np.int8)
    for axis in range(3):
        d = dirs[..., axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = (bounds[axis, 0] - origin[axis]) / d
            t_hi = (bounds[axis, 1] - origin[axis]) / d
        t_far = np.where(d != 0, np.maximum(t_lo, t_hi), np.inf)
        f = np.where(d > 0, 2 * axis + 1, 2 * axis)
        closer = t_far < t_exit
        t_exit = np.where(closer, t_far, t_exit)
        face = np.where(closer, f, face)
    return t_exit, face


def _sphere_hit(origin, dirs, center, radius):
    oc = origin - center
    a = np.sum(dirs * dirs, axis=-1)
    b = 2.0 * np.sum(dirs * oc, axis=-1)
    c = float(np.dot(oc, oc) - radius * radius)
    disc = b * b - 4 * a * c
    hit = disc > 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t0 = (-b - sq) / (2 * a)
    t1 = (-b + sq) / (2 * a)
    t = np.where(t0 > 1e-9, t0, t1)
    return np.where(hit & (t > 1e-9), t, np.inf)


def _box_hit(origin, dirs, center, half):
    t_near = np.full(dirs.shape[:-1], -np.inf)
    t_far = np.full(dirs.shape[:-1], np.inf)
    for axis in range(3):
        d = dirs[..., axis]
        lo = center[axis] - half[axis]
        hi = center[axis] + half[axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo = (lo - origin[axis]) / d
            t_hi = (hi - origin[axis]) / d
        t1 = np.minimum(t_lo, t_hi)
        t2 = np.maximum(t_lo, t_hi)
        parallel = d == 0
        outside = parallel & ((origin[axis] < lo) | (origin[axis] > hi))
        t1 = np.where(parallel, -np.inf, t1)
        t2 = np.where(parallel, np.inf, t2)
        t_near = np.maximum(t_near, t1)
        t_far = np.minimum(t_far, t2)
        t_far = np.where(outside, -np.inf, t_far)
    hit = (t_near <= t_far) & (t_far > 1e-9)
    t = np.where(t_near > 1e-9, t_near, t_far)
    return np.where(hit, t, np.inf)


def _bg_color(scene: SceneDescription, pts: np.ndarray, face: np.ndarray) -> np.ndarray:
    if scene.homogeneous_bg:
        return np.broadcast_to(_HOMOGENEOUS_BG, pts.shape).copy()
    # one smooth trivariate field for all faces: continuous across wall/floor
    # creases and low-frequency, so resampling in the renderer stays benign
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    tp = 2 * math.pi
    r = 150.0 + 24.0 * np.sin(tp * (0.23 * x + 0.11 * y - 0.07 * z)) \
        + 12.0 * np.sin(tp * (0.09 * x - 0.16 * z) + 0.8)
    g = 146.0 + 24.0 * np.sin(tp * (0.07 * x + 0.21 * y + 0.12 * z) + 1.4) \
        + 12.0 * np.sin(tp * (0.17 * y - 0.08 * z) + 2.3)
    b = 152.0 + 24.0 * np.sin(tp * (-0.13 * x + 0.09 * y + 0.19 * z) + 2.6) \
        + 12.0 * np.sin(tp * (0.12 * x + 0.10 * y) + 0.4)
    return np.stack([r, g, b], axis=-1)


def _fg_color(obj: SceneObject, pts: np.ndarray, center_t: np.ndarray) -> np.ndarray:
    local = pts - center_t
    base = np.asarray(obj.base_color)
    mod = np.stack(
        [
            30.0 * np.sin(2 * math.pi * (1.7 * local[..., 0] + 1.1 * local[..., 1])),
            30.0 * np.sin(2 * math.pi * (1.3 * local[..., 1] + 0.9 * local[..., 2]) + 0.7),
            30.0 * np.sin(2 * math.pi * (1.1 * local[..., 2] + 1.5 * local[..., 0]) + 1.9),
        ],
        axis=-1,
    )
    return base + mod


def _raycast(scene: SceneDescription, calib: CameraCalibration, t: float,
             include_fg: bool):
    """Returns (depth, color, fg_mask) arrays for one camera at time t."""
    origin = calib.pose.center
    dirs = pixel_rays(calib) @ calib.pose.rotation  # world directions, z_cam=1 scale

    depth, face = _room_exit(origin, dirs, scene.room)
    obj_idx = np.full(depth.shape, -1, dtype=np.int32)

    centers = []
    if include_fg:
        for i, obj in enumerate(scene.objects):
            c = obj.center_at(t)
            centers.append(c)
            if obj.kind == "sphere":
                th = _sphere_hit(origin, dirs, c, obj.size[0] / 2.0)
            else:
                th = _box_hit(origin, dirs, c, np.asarray(obj.size) / 2.0)
            closer = th < depth
            depth = np.where(closer, th, depth)
            obj_idx = np.where(closer, i, obj_idx)

    pts = origin + dirs * depth[..., None]
    color = _bg_color(scene, pts, face)
    for i, obj in enumerate(scene.objects if include_fg else ()):
        mask = obj_idx == i
        if mask.any():
            color[mask] = _fg_color(scene.objects[i], pts[mask], centers[i])

    color = np.clip(np.round(color), 0, 255).astype(np.uint8)
    return depth.astype(np.float32), color, obj_idx >= 0


def render_ground_truth(scene: SceneDescription, calib: CameraCalibration,
                        t: float) -> MvdFrame:
    """Exact MVD capture for one camera; every depth pixel Valid."""
    frame, _ = render_with_mask(scene, calib, t)
    return frame


def render_with_mask(scene: SceneDescription, calib: CameraCalibration,
                     t: float) -> Tuple[MvdFrame, np.ndarray]:
    """Ground-truth frame plus the exact FG object mask."""
    if not (0.0 <= t <= scene.duration):
        raise ValueError(f"t={t} outside scene duration [0, {scene.duration}]")
    depth, color, fg = _raycast(scene, calib, t, include_fg=True)
    ts = int(round(t * 1e6))
    k = calib.intrinsics
    mvd = MvdFrame(
        camera_id=calib.id,
        color=ColorFrame(k.width, k.height, color, ts),
        depth=DepthFrame(k.width, k.height, depth,
                         np.zeros(depth.shape, dtype=np.uint8), ts),
    )
    return mvd, fg


def bg_depth_model(scene: SceneDescription, calib: CameraCalibration) -> DepthFrame:
    """Exact static-background depth for one camera; FG objects absent."""
    depth, _, _ = _raycast(scene, calib, 0.0, include_fg=False)
    k = calib.intrinsics
    return DepthFrame(k.width, k.height, depth,
                      np.zeros(depth.shape, dtype=np.uint8), 0)


# ---------------------------------------------------------------------------
# depth degradation


def _shift2d(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(a)
    h, w = a.shape
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    yd = slice(max(-dy, 0), min(h - dy, h))
    xd = slice(max(-dx, 0), min(w - dx, w))
    out[ys, xs] = a[yd, xd]
    return out


def dilate_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation with a (2r+1)^2 square structuring element."""
    out = mask.copy()
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy or dx:
                out |= _shift2d(mask, dy, dx)
    return out


def erroneous_depth(z_true: np.ndarray, spec: DepthErrorSpec) -> np.ndarray:
    """Single-camera depth q satisfying z_true / q = alpha*q + beta.

    Stable closed form q = 2 z / (beta + sqrt(beta^2 + 4 alpha z)); reduces to
    z / beta when alpha = 0.
    """
    z = np.asarray(z_true, dtype=np.float64)
    disc = spec.beta_true**2 + 4.0 * spec.alpha_true * z
    if np.any(disc <= 0):
        raise ValueError("error model has no positive solution for some depths")
    return 2.0 * z / (spec.beta_true + np.sqrt(disc))


def degrade_depth(
    frame: DepthFrame,
    spec: DepthErrorSpec,
    seed: int,
    fg_mask: Optional[np.ndarray] = None,
) -> DepthFrame:
    """Replace exact depths with the modeled erroneous camera measurement.

    Adds uniform discretization noise and, when an FG mask is supplied,
    invalidates a ``hole_width`` band just outside FG silhouettes (the stereo
    disocclusion holes).
    """
    rng = np.random.default_rng(seed)
    depth = frame.depth.astype(np.float64).copy()
    validity = frame.validity.copy()

    valid = frame.valid_mask
    q = erroneous_depth(depth[valid], spec)
    if spec.noise_amplitude > 0:
        q = q + rng.uniform(-spec.noise_amplitude, spec.noise_amplitude, q.shape)
        q = np.maximum(q, 1e-6)
    depth[valid] = q

    if fg_mask is not None and spec.hole_width > 0:
        band = dilate_mask(fg_mask.astype(bool), spec.hole_width) & ~fg_mask.astype(bool)
        validity[band & valid] = Validity.INVALID

    depth[validity != Validity.VALID] = 0.0
    return DepthFrame(frame.width, frame.height, depth.astype(np.float32),
                      validity, frame.timestamp_us)


def emit_control_points(
    scene: SceneDescription,
    rig: Sequence[CameraCalibration],
    specs: Mapping[int, DepthErrorSpec] | DepthErrorSpec,
    count: int,
    seed: int,
) -> list[ControlPointObservation]:
    """Sampled (z_cam, z_calib) pairs per camera, following each camera's error.

    z_calib is the exact ray-cast depth; z_cam follows the camera's
    DepthErrorSpec including its discretization noise.
    """
    if count < 2:
        raise ValueError("need at least 2 control points per camera")
    rng = np.random.default_rng(seed)
    obs: list[ControlPointObservation] = []
    for calib in rig:
        spec = specs if isinstance(specs, DepthErrorSpec) else specs[calib.id]
        frame = render_ground_truth(scene, calib, 0.0)
        h, w = frame.depth.depth.shape
        us = rng.integers(0, w, size=count)
        vs = rng.integers(0, h, size=count)
        z_true = frame.depth.depth[vs, us].astype(np.float64)
        z_cam = erroneous_depth(z_true, spec)
        if spec.noise_amplitude > 0:
            z_cam = z_cam + rng.uniform(-spec.noise_amplitude, spec.noise_amplitude,
                                        z_cam.shape)
            z_cam = np.maximum(z_cam, 1e-6)
        for u, v, q, z in zip(us, vs, z_cam, z_true):
            obs.append(ControlPointObservation(calib.id, float(u), float(v),
                                               float(q), float(z)))
    return obs


# ---------------------------------------------------------------------------
# scene presets

_ROOM = Room(x_min=-2.6, x_max=2.6, y_min=-1.6, y_max=1.1, z_min=-3.2, z_max=2.2)


def _obj(kind, center, size, color, amp=(0, 0, 0), freq=0.0, phase=0.0):
    return SceneObject(kind, center, size, color, amp, freq, phase)


def make_scene(preset: str, duration: float = 12.0, fps: float = 30.0,
               homogeneous_bg: bool = False) -> SceneDescription:
    """Built-in scene presets with increasing FG coverage and motion."""
    p = preset.lower()
    if p == "simple":
        objects = (
            _obj("sphere", (-0.45, 0.30, 0.25), (0.684, 0.684, 0.684), (196, 92, 74)),
            _obj("box", (0.55, 0.45, 0.35), (0.607, 0.883, 0.497), (84, 110, 190),
                 amp=(0.05, 0.0, 0.0), freq=0.10),
        )
    elif p == "medium":
        objects = (
            _obj("sphere", (-0.60, 0.28, 0.30), (0.696, 0.696, 0.696), (196, 92, 74),
                 amp=(0.10, 0.0, 0.05), freq=0.18),
            _obj("box", (0.55, 0.42, 0.40), (0.638, 0.986, 0.522), (84, 110, 190),
                 amp=(0.08, 0.0, 0.08), freq=0.666, phase=1.0),
            _obj("sphere", (0.05, 0.62, -0.30), (0.487, 0.487, 0.487), (214, 176, 66),
                 amp=(0.12, 0.06, 0.0), freq=0.24, phase=2.2),
        )
    elif p == "complex":
        objects = (
            _obj("sphere", (-0.80, 0.22, 0.35), (0.862, 0.862, 0.862), (196, 92, 74),
                 amp=(0.14, 0.05, 0.06), freq=0.30),
            _obj("box", (0.70, 0.35, 0.45), (0.760, 1.204, 0.634), (84, 110, 190),
                 amp=(0.10, 0.0, 0.10), freq=0.666, phase=1.0),
            _obj("sphere", (0.05, 0.55, -0.25), (0.697, 0.697, 0.697), (214, 176, 66),
                 amp=(0.18, 0.08, 0.05), freq=0.24, phase=2.2),
            _obj("box", (-0.15, 0.60, 0.85), (0.697, 0.887, 0.507), (96, 176, 120),
                 amp=(0.12, 0.0, 0.05), freq=0.42, phase=0.5),
            _obj("sphere", (0.85, 0.70, -0.15), (0.507, 0.507, 0.507), (170, 96, 182),
                 amp=(0.08, 0.10, 0.0), freq=0.55, phase=3.0),
        )
    else:
        raise ValueError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    return SceneDescription(preset=p, room=_ROOM, objects=objects,
                            duration=duration, fps=fps,
                            homogeneous_bg=homogeneous_bg)


def measure_bg_ratio(scene: SceneDescription, rig: Sequence[CameraCalibration],
                     times: Iterable[float]) -> float:
    """Mean fraction of non-FG pixels over the rig and sample times."""
    total = 0
    bg = 0
    for t in times:
        for calib in rig:
            _, fg = render_with_mask(scene, calib, t)
            total += fg.size
            bg += int(fg.size - fg.sum())
    return bg / total


# ---------------------------------------------------------------------------
# visibility oracle (used by synthesis quality tests)


def coverage_mask(
    scene: SceneDescription,
    t: float,
    virtual: CameraCalibration,
    refs: Sequence[CameraCalibration],
    rel_tol: float = 0.01,
) -> np.ndarray:
    """True where the virtual-view pixel's surface is visible from >=1 reference.

    Uses exact renders on both sides; a point is visible from a reference if
    it projects in-bounds and the reference's own depth there matches.
    """
    from .core import project_points, unproject_map

    gt = render_ground_truth(scene, virtual, t)
    pts = unproject_map(gt.depth.depth, virtual)
    covered = np.zeros(gt.depth.depth.shape, dtype=bool)
    for ref in refs:
        ref_depth = render_ground_truth(scene, ref, t).depth.depth
        uv, z, in_front = project_points(pts.reshape(-1, 3), ref)
        uv = np.where(in_front[:, None], uv, -1.0)
        u = np.round(uv[:, 0]).astype(np.int64)
        v = np.round(uv[:, 1]).astype(np.int64)
        h, w = ref_depth.shape
        ok = in_front & (u >= 0) & (u < w) & (v >= 0) & (v < h)
        uu = np.clip(u, 0, w - 1)
        vv = np.clip(v, 0, h - 1)
        seen = ok & (np.abs(ref_depth[vv, uu] - z) <= rel_tol * z + 0.02)
        covered |= seen.reshape(covered.shape)
    return covered


# ---------------------------------------------------------------------------
# scene preset files

SCENE_FORMAT_VERSION = 1


def save_scene(path: str | Path, scene: SceneDescription) -> None:
    doc = {
        "version": SCENE_FORMAT_VERSION,
        "preset": scene.preset,
        "duration": scene.duration,
        "fps": scene.fps,
        "homogeneous_bg": scene.homogeneous_bg,
        "room": vars(scene.room).copy(),
        "objects": [
            {
                "kind": o.kind,
                "center": list(o.center),
                "size": list(o.size),
                "base_color": list(o.base_color),
                "motion_amp": list(o.motion_amp),
                "motion_freq_hz": o.motion_freq_hz,
                "motion_phase": o.motion_phase,
            }
            for o in scene.objects
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_scene(path: str | Path) -> SceneDescription:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != SCENE_FORMAT_VERSION:
        raise ValueError(f"unsupported scene file version {doc.get('version')!r}")
    return SceneDescription(
        preset=doc["preset"],
        room=Room(**doc["room"]),
        objects=tuple(
            SceneObject(
                kind=o["kind"],
                center=tuple(o["center"]),
                size=tuple(o["size"]),
                base_color=tuple(o["base_color"]),
                motion_amp=tuple(o["motion_amp"]),
                motion_freq_hz=o["motion_freq_hz"],
                motion_phase=o["motion_phase"],
            )
            for o in doc["objects"]
        ),
        duration=doc["duration"],
        fps=doc["fps"],
        homogeneous_bg=doc["homogeneous_bg"],
    )
