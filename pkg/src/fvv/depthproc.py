"""Capture-server depth pipeline.

Fits and applies the quadratic depth correction, maintains the per-pixel
single-Gaussian background color model, removes background depth, and closes
small depth holes with a joint bilateral filter.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ColorFrame, DepthFrame, Validity
from .scenegen import ControlPointObservation


class DegenerateFitError(ValueError):
    """Raised when control points cannot determine the correction model."""


class UntrainedModelError(RuntimeError):
    """Raised when classification is attempted before warm-up completes."""


@dataclass(frozen=True)
class CorrectionModel:
    """Quadratic depth correction z_post = (alpha * z + beta) * z."""

    alpha: float  # 1/meters
    beta: float
    residual_rms: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)
                and math.isfinite(self.residual_rms)):
            raise ValueError("correction model parameters must be finite")


def fit_depth_correction(obs: Sequence[ControlPointObservation]) -> CorrectionModel:
    """Least-squares fit of z_calib/z_cam = alpha * z_cam + beta.

    The fit runs on the depth ratio against the single-camera depth, matching
    how the error manifests: a systematic deviation of the ratio from 1 that
    grows with distance.
    """
    if len(obs) < 2:
        raise DegenerateFitError("need at least 2 control points")
    z_cam = np.array([o.z_cam for o in obs], dtype=np.float64)
    z_calib = np.array([o.z_calib for o in obs], dtype=np.float64)
    if np.any(z_cam <= 0) or np.any(z_calib <= 0):
        raise ValueError("control point depths must be positive")
    if np.unique(z_cam).size < 2:
        raise DegenerateFitError("control points must span at least 2 distinct depths")

    ratio = z_calib / z_cam
    alpha, beta = np.polyfit(z_cam, ratio, 1)
    resid = ratio - (alpha * z_cam + beta)
    return CorrectionModel(float(alpha), float(beta),
                           float(np.sqrt(np.mean(resid**2))))


def correct_depth(frame: DepthFrame, model: CorrectionModel) -> DepthFrame:
    """Apply the quadratic correction to every Valid pixel.

    Non-Valid pixels pass through untouched; a corrected value that comes out
    non-positive loses its validity.
    """
    depth = frame.depth.astype(np.float64).copy()
    validity = frame.validity.copy()
    valid = frame.valid_mask
    z = depth[valid]
    z_post = (model.alpha * z + model.beta) * z
    depth[valid] = z_post

    bad = valid & (depth <= 0)
    validity[bad] = Validity.INVALID
    depth[validity != Validity.VALID] = 0.0
    return DepthFrame(frame.width, frame.height, depth.astype(np.float32),
                      validity, frame.timestamp_us)


# ---------------------------------------------------------------------------
# single-Gaussian background color model


@dataclass
class GaussianBgModel:
    """Per-pixel, per-channel running Gaussian of the background color.

    Single-writer: one capture-server unit trains it; classification on a
    trained model is read-only.
    """

    width: int
    height: int
    warmup_frames: int = 30
    learning_rate: float = 0.02  # rho
    threshold: float = 3.5  # tau
    var_floor: float = 4.0  # sigma^2 floor, 8-bit units squared
    frames_trained: int = 0
    mean: np.ndarray = field(default=None, repr=False)
    var: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros((self.height, self.width, 3), dtype=np.float64)
        if self.var is None:
            self.var = np.full((self.height, self.width, 3), self.var_floor,
                               dtype=np.float64)

    @property
    def trained(self) -> bool:
        return self.frames_trained >= self.warmup_frames


def bg_train(model: GaussianBgModel, frame: ColorFrame) -> GaussianBgModel:
    """Warm-up update of the running mean/variance from a BG-only frame."""
    if (frame.height, frame.width) != (model.height, model.width):
        raise ValueError("frame dimensions do not match the model")
    x = frame.pixels.astype(np.float64)
    if model.frames_trained == 0:
        model.mean[:] = x
        model.var[:] = model.var_floor
    else:
        rho = model.learning_rate
        model.mean[:] = (1.0 - rho) * model.mean + rho * x
        diff2 = (x - model.mean) ** 2
        model.var[:] = np.maximum((1.0 - rho) * model.var + rho * diff2,
                                  model.var_floor)
    model.frames_trained += 1
    return model


def classify_fg(model: GaussianBgModel, frame: ColorFrame) -> np.ndarray:
    """Boolean FG mask: sum over channels of (x-mu)^2/sigma^2 above tau^2."""
    if not model.trained:
        raise UntrainedModelError(
            f"model warm-up incomplete ({model.frames_trained}/{model.warmup_frames})"
        )
    if (frame.height, frame.width) != (model.height, model.width):
        raise ValueError("frame dimensions do not match the model")
    x = frame.pixels.astype(np.float64)
    score = np.sum((x - model.mean) ** 2 / model.var, axis=-1)
    return score > model.threshold**2


def remove_bg_depth(depth: DepthFrame, mask: np.ndarray) -> DepthFrame:
    """Flag BG-mask pixels as Background; FG pixels pass through.

    Touches only the depth stream; color is always transmitted in full.
    """
    if mask.shape != (depth.height, depth.width):
        raise ValueError("mask dimensions do not match the depth frame")
    validity = depth.validity.copy()
    d = depth.depth.copy()
    bg = ~np.asarray(mask, dtype=bool)
    validity[bg] = Validity.BACKGROUND
    d[bg] = 0.0
    return DepthFrame(depth.width, depth.height, d, validity, depth.timestamp_us)


# ---------------------------------------------------------------------------
# joint bilateral hole closing


def bilateral_close_holes(
    depth: DepthFrame,
    guide: ColorFrame,
    radius: int = 2,
    sigma_spatial: float = 2.0,
    sigma_range: float = 10.0,
    min_valid_neighbors: int = 6,
) -> DepthFrame:
    """Fill Invalid pixels from Valid neighbors with joint bilateral weights.

    A hole pixel is filled only when at least ``min_valid_neighbors`` Valid
    pixels fall inside its (2r+1)^2 window; the fill is the weight-averaged
    neighbor depth, weighted by spatial distance and guide-color similarity.
    Valid and Background pixels are never modified.
    """
    if (guide.height, guide.width) != (depth.height, depth.width):
        raise ValueError("guide dimensions do not match the depth frame")
    holes = depth.validity == Validity.INVALID
    if not holes.any():
        return depth

    valid = depth.valid_mask
    z = depth.depth.astype(np.float64)
    g = guide.pixels.astype(np.float64)

    num = np.zeros(z.shape)
    den = np.zeros(z.shape)
    cnt = np.zeros(z.shape, dtype=np.int32)
    inv_2ss = 1.0 / (2.0 * sigma_spatial**2)
    inv_2sr = 1.0 / (2.0 * sigma_range**2)

    from .scenegen import _shift2d  # zero-padded integer shift

    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            nb_valid = _shift2d(valid.astype(np.float64), dy, dx) > 0
            nb_z = _shift2d(z, dy, dx)
            nb_g = np.stack([_shift2d(g[..., c], dy, dx) for c in range(3)], axis=-1)
            color_d2 = np.sum((g - nb_g) ** 2, axis=-1)
            w = math.exp(-(dy * dy + dx * dx) * inv_2ss) * np.exp(-color_d2 * inv_2sr)
            w = np.where(nb_valid, w, 0.0)
            num += w * nb_z
            den += w
            cnt += nb_valid.astype(np.int32)

    fill = holes & (cnt >= min_valid_neighbors) & (den > 0)
    out_depth = depth.depth.copy()
    out_validity = depth.validity.copy()
    out_depth[fill] = (num[fill] / den[fill]).astype(np.float32)
    out_validity[fill] = Validity.VALID
    return DepthFrame(depth.width, depth.height, out_depth, out_validity,
                      depth.timestamp_us)


# ---------------------------------------------------------------------------
# versioned binary sidecars

_CORRECTION_MAGIC = b"FVCM"
_CORRECTION_VERSION = 1
_BG_MAGIC = b"FVBG"
_BG_VERSION = 1


def save_correction_model(path: str | Path, model: CorrectionModel) -> None:
    data = _CORRECTION_MAGIC + struct.pack(">Hddd", _CORRECTION_VERSION,
                                           model.alpha, model.beta,
                                           model.residual_rms)
    Path(path).write_bytes(data)


def load_correction_model(path: str | Path) -> CorrectionModel:
    data = Path(path).read_bytes()
    if data[:4] != _CORRECTION_MAGIC:
        raise ValueError("not a correction model file")
    version, alpha, beta, rms = struct.unpack(">Hddd", data[4:])
    if version != _CORRECTION_VERSION:
        raise ValueError(f"unsupported correction model version {version}")
    return CorrectionModel(alpha, beta, rms)


def save_bg_model(path: str | Path, model: GaussianBgModel) -> None:
    header = _BG_MAGIC + struct.pack(
        ">HHHIIddd", _BG_VERSION, model.width, model.height,
        model.warmup_frames, model.frames_trained,
        model.learning_rate, model.threshold, model.var_floor,
    )
    body = model.mean.astype("<f4").tobytes() + model.var.astype("<f4").tobytes()
    Path(path).write_bytes(header + body)


def load_bg_model(path: str | Path) -> GaussianBgModel:
    data = Path(path).read_bytes()
    if data[:4] != _BG_MAGIC:
        raise ValueError("not a background model file")
    head = struct.Struct(">HHHIIddd")
    version, w, h, warmup, trained, rho, tau, floor = head.unpack_from(data, 4)
    if version != _BG_VERSION:
        raise ValueError(f"unsupported background model version {version}")
    off = 4 + head.size
    n = w * h * 3
    mean = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(h, w, 3)
    var = np.frombuffer(data, dtype="<f4", count=n, offset=off + 4 * n).reshape(h, w, 3)
    return GaussianBgModel(
        width=w, height=h, warmup_frames=warmup, learning_rate=rho,
        threshold=tau, var_floor=floor, frames_trained=trained,
        mean=mean.astype(np.float64), var=var.astype(np.float64),
    )
