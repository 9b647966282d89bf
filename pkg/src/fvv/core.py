"""Shared geometric and image value types plus pinhole projection math.

Conventions fixed once for the whole pipeline:

* image origin top-left, ``u`` rightward, ``v`` downward, pixel centers at
  integer coordinates;
* world units are meters everywhere;
* ``CameraPose.rotation`` maps world to camera: ``p_cam = R @ (X - center)``;
* camera frame is right-handed, x right, y down, z forward (optical axis);
* depth is the z coordinate in the camera frame, not ray length.

All types here are immutable values; all functions are pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

ORTHONORMAL_TOL = 1e-9


class Validity(IntEnum):
    """Per-pixel depth flag. Stored as uint8 rasters."""

    VALID = 0
    INVALID = 1
    BACKGROUND = 2


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.width % 2 or self.height % 2:
            # YUV420 packing needs even dimensions
            raise ValueError(f"width and height must be even, got {self.width}x{self.height}")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class CameraPose:
    rotation: np.ndarray  # (3, 3) world -> camera
    center: np.ndarray  # (3,) camera center in world coordinates, meters

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        ctr = np.asarray(self.center, dtype=np.float64)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if ctr.shape != (3,):
            raise ValueError(f"center must be a 3-vector, got {ctr.shape}")
        if not np.all(np.isfinite(rot)) or not np.all(np.isfinite(ctr)):
            raise ValueError("pose contains non-finite values")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > ORTHONORMAL_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "center", ctr)


@dataclass(frozen=True)
class CameraCalibration:
    id: int
    intrinsics: CameraIntrinsics
    pose: CameraPose


@dataclass(frozen=True)
class ColorFrame:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8
    timestamp_us: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel raster shape {px.shape} does not match {self.height}x{self.width}x3"
            )
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class DepthFrame:
    width: int
    height: int
    depth: np.ndarray  # (height, width) float32, meters along the optical axis
    validity: np.ndarray  # (height, width) uint8 of Validity codes
    timestamp_us: int = 0

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float32)
        v = np.asarray(self.validity, dtype=np.uint8)
        if d.shape != (self.height, self.width):
            raise ValueError(f"depth shape {d.shape} does not match {self.height}x{self.width}")
        if v.shape != d.shape:
            raise ValueError("validity shape does not match depth shape")
        valid = v == Validity.VALID
        if valid.any():
            dv = d[valid]
            if not np.all(np.isfinite(dv)) or np.any(dv <= 0):
                raise ValueError("Valid pixels must carry positive finite depth")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "validity", v)

    @property
    def valid_mask(self) -> np.ndarray:
        return self.validity == Validity.VALID


@dataclass(frozen=True)
class MvdFrame:
    """Paired color and depth capture for one camera at one instant."""

    camera_id: int
    color: ColorFrame
    depth: DepthFrame

    @property
    def timestamp_us(self) -> int:
        return self.color.timestamp_us


@dataclass(frozen=True)
class DepthRange:
    z_near: float
    z_far: float

    def __post_init__(self):
        if not (0 < self.z_near < self.z_far):
            raise ValueError(f"need 0 < z_near < z_far, got ({self.z_near}, {self.z_far})")


# ---------------------------------------------------------------------------
# projection math


def world_to_camera(points: np.ndarray, pose: CameraPose) -> np.ndarray:
    """Transform (..., 3) world points into the camera frame."""
    pts = np.asarray(points, dtype=np.float64)
    return (pts - pose.center) @ pose.rotation.T


def camera_to_world(points: np.ndarray, pose: CameraPose) -> np.ndarray:
    """Transform (..., 3) camera-frame points back into world coordinates."""
    pts = np.asarray(points, dtype=np.float64)
    return pts @ pose.rotation + pose.center


def unproject(
    pixel: Tuple[float, float], depth: float, calib: CameraCalibration
) -> np.ndarray:
    """Lift one pixel plus its depth to a 3D world point.

    Raises ValueError for non-positive depth.
    """
    if depth <= 0:
        raise ValueError(f"depth must be positive, got {depth}")
    u, v = pixel
    k = calib.intrinsics
    p_cam = np.array([(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth])
    return camera_to_world(p_cam, calib.pose)


def project(
    point: np.ndarray, calib: CameraCalibration
) -> Optional[Tuple[float, float, float]]:
    """Project one world point; returns ``(u, v, depth)`` or None behind the camera."""
    p_cam = world_to_camera(np.asarray(point, dtype=np.float64), calib.pose)
    z = p_cam[2]
    if z <= 0:
        return None
    k = calib.intrinsics
    return (k.fx * p_cam[0] / z + k.cx, k.fy * p_cam[1] / z + k.cy, float(z))


def project_points(
    points: np.ndarray, calib: CameraCalibration
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection of (N, 3) world points.

    Returns ``(uv, z, in_front)``; ``uv`` rows are meaningless where
    ``in_front`` is False.
    """
    p_cam = world_to_camera(points, calib.pose)
    z = p_cam[..., 2]
    in_front = z > 0
    k = calib.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * p_cam[..., 0] / z + k.cx
        v = k.fy * p_cam[..., 1] / z + k.cy
    return np.stack([u, v], axis=-1), z, in_front


def pixel_rays(calib: CameraCalibration) -> np.ndarray:
    """Camera-frame ray directions for every pixel, z normalized to 1.

    Shape (height, width, 3). Multiplying a ray by a depth value gives the
    camera-frame point at that depth.
    """
    k = calib.intrinsics
    u = np.arange(k.width, dtype=np.float64)
    v = np.arange(k.height, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    return np.stack([(uu - k.cx) / k.fx, (vv - k.cy) / k.fy, np.ones_like(uu)], axis=-1)


def unproject_map(depth: np.ndarray, calib: CameraCalibration) -> np.ndarray:
    """World points for a full (H, W) depth raster; shape (H, W, 3)."""
    rays = pixel_rays(calib)
    p_cam = rays * np.asarray(depth, dtype=np.float64)[..., None]
    return camera_to_world(p_cam, calib.pose)


def camera_distance(a: CameraPose, b: CameraPose) -> float:
    """Euclidean distance between camera centers, meters."""
    return float(np.linalg.norm(a.center - b.center))


# ---------------------------------------------------------------------------
# 16-bit millimeter acquisition boundary

MM_INVALID = 0  # reserved raster value for pixels without meaningful depth


def depth_to_millimeters(frame: DepthFrame) -> np.ndarray:
    """Quantize metric depth to the 16-bit little-endian millimeter raster.

    Non-Valid pixels map to 0; validity travels in the container sidecar.
    """
    mm = np.zeros((frame.height, frame.width), dtype=np.uint16)
    valid = frame.valid_mask
    q = np.round(frame.depth[valid] * 1000.0)
    mm[valid] = np.clip(q, 1, 65535).astype(np.uint16)
    return mm


def depth_from_millimeters(
    mm: np.ndarray, validity: np.ndarray, timestamp_us: int = 0
) -> DepthFrame:
    h, w = mm.shape
    depth = mm.astype(np.float32) / 1000.0
    validity = np.asarray(validity, dtype=np.uint8).copy()
    # a Valid pixel whose quantized value collapsed to 0 carries no depth
    validity[(validity == Validity.VALID) & (mm == MM_INVALID)] = Validity.INVALID
    depth[validity != Validity.VALID] = 0.0
    return DepthFrame(w, h, depth, validity, timestamp_us)


# ---------------------------------------------------------------------------
# calibration rig file

RIG_FORMAT_VERSION = 1


def save_rig(path: str | Path, rig: Sequence[CameraCalibration]) -> None:
    """Write a calibration rig as JSON (see README for the field list)."""
    doc = {
        "version": RIG_FORMAT_VERSION,
        "cameras": [
            {
                "id": c.id,
                "fx": c.intrinsics.fx,
                "fy": c.intrinsics.fy,
                "cx": c.intrinsics.cx,
                "cy": c.intrinsics.cy,
                "width": c.intrinsics.width,
                "height": c.intrinsics.height,
                "rotation": [float(x) for x in c.pose.rotation.reshape(-1)],
                "center": [float(x) for x in c.pose.center],
            }
            for c in rig
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_rig(path: str | Path) -> list[CameraCalibration]:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != RIG_FORMAT_VERSION:
        raise ValueError(f"unsupported rig file version {doc.get('version')!r}")
    cams = []
    seen = set()
    for entry in doc["cameras"]:
        cid = int(entry["id"])
        if cid in seen:
            raise ValueError(f"duplicate camera id {cid} in rig file")
        seen.add(cid)
        cams.append(
            CameraCalibration(
                id=cid,
                intrinsics=CameraIntrinsics(
                    fx=float(entry["fx"]),
                    fy=float(entry["fy"]),
                    cx=float(entry["cx"]),
                    cy=float(entry["cy"]),
                    width=int(entry["width"]),
                    height=int(entry["height"]),
                ),
                pose=CameraPose(
                    rotation=np.array(entry["rotation"], dtype=np.float64).reshape(3, 3),
                    center=np.array(entry["center"], dtype=np.float64),
                ),
            )
        )
    return cams
