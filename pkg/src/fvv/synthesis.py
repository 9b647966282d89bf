"""Layered depth-image-based rendering.

Per reference camera, the foreground (live depth + live color) and background
(static model depth + live color) are warped into the virtual view with a
forward depth warp, crack-closing median, and backward color fetch. The
per-camera contributions of each layer are mixed by camera distance, and the
merged FG is composited over the merged BG.

Pure functions over immutable inputs; per-camera warps are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .core import (
    CameraCalibration,
    CameraPose,
    ColorFrame,
    DepthFrame,
    Validity,
    camera_distance,
    pixel_rays,
    project_points,
    unproject_map,
)

LAYER_FG = "fg"
LAYER_BG = "bg"


@dataclass(frozen=True)
class SynthesisConfig:
    reference_count: int = 3  # cameras blended per view
    splat_radius: int = 1
    crack_fill_window: int = 3
    mixing_epsilon: float = 0.01  # meters; weight = 1 / (distance + eps)
    depth_band_rel: float = 0.02  # occlusion agreement band, fraction of depth
    hole_color: Tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        if self.reference_count < 1:
            raise ValueError("reference count must be >= 1")
        if self.splat_radius < 0 or self.crack_fill_window < 1:
            raise ValueError("bad splat/crack parameters")


@dataclass(frozen=True)
class LayerContribution:
    """One camera's warped raster for one layer, in virtual-view coordinates."""

    layer: str
    camera_id: int
    color: np.ndarray  # (H, W, 3) float64; undefined where not valid
    depth: np.ndarray  # (H, W) float64 virtual-view depth
    valid: np.ndarray  # (H, W) bool
    weight: float

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("contribution weight must be positive")


@dataclass(frozen=True)
class MergedLayer:
    color: np.ndarray  # (H, W, 3) float64
    depth: np.ndarray  # (H, W) float64
    valid: np.ndarray  # (H, W) bool


# valid 3x3 neighbors a crack pixel must have to be treated as interior
_CRACK_SUPPORT = 5


def _neighbor_count(mask: np.ndarray) -> np.ndarray:
    from .scenegen import _shift2d

    cnt = np.zeros(mask.shape, dtype=np.int32)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy or dx:
                cnt += _shift2d(mask.astype(np.int32), dy, dx)
    return cnt


def _crack_fill_median(zbuf: np.ndarray, window: int) -> np.ndarray:
    """Fill isolated invalid depth pixels with the median of valid neighbors.

    Only pixels with a clear majority of valid neighbors are filled, so the
    filter closes sub-pixel warp cracks without growing silhouettes.
    """
    from .scenegen import _shift2d

    r = window // 2
    valid = np.isfinite(zbuf)
    holes = ~valid
    if not holes.any():
        return zbuf
    stacks = []
    counts = np.zeros(zbuf.shape, dtype=np.int32)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            nb = _shift2d(np.where(valid, zbuf, 0.0), dy, dx)
            nb_valid = _shift2d(valid.astype(np.float64), dy, dx) > 0
            stacks.append(np.where(nb_valid, nb, np.nan))
            counts += nb_valid.astype(np.int32)
    neighborhood = np.stack(stacks)
    need = (window * window) // 2 + 1
    fill = holes & (counts >= need)
    out = zbuf.copy()
    if fill.any():
        import warnings

        with warnings.catch_warnings():
            # all-NaN windows are legal; fill indexes only well-supported pixels
            warnings.simplefilter("ignore", RuntimeWarning)
            med = np.nanmedian(neighborhood, axis=0)
        out[fill] = med[fill]
    return out


def _bilinear_fetch(
    pixels: np.ndarray, valid: np.ndarray, us: np.ndarray, vs: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Sample (H, W, 3) at continuous coords, weighting out invalid taps.

    Returns (colors (N, 3), ok (N,)); samples with no valid tap are not ok.
    """
    h, w = valid.shape
    u0 = np.floor(us).astype(np.int64)
    v0 = np.floor(vs).astype(np.int64)
    fu = us - u0
    fv = vs - v0

    colors = np.zeros((us.shape[0], 3))
    weights = np.zeros(us.shape[0])
    for du, dv, wgt in (
        (0, 0, (1 - fu) * (1 - fv)),
        (1, 0, fu * (1 - fv)),
        (0, 1, (1 - fu) * fv),
        (1, 1, fu * fv),
    ):
        uu = u0 + du
        vv = v0 + dv
        inb = (uu >= 0) & (uu < w) & (vv >= 0) & (vv < h)
        uc = np.clip(uu, 0, w - 1)
        vc = np.clip(vv, 0, h - 1)
        tap_w = np.where(inb & valid[vc, uc], wgt, 0.0)
        colors += tap_w[:, None] * pixels[vc, uc]
        weights += tap_w
    ok = weights > 1e-12
    colors[ok] /= weights[ok, None]
    return colors, ok


def warp_layer(
    color: ColorFrame,
    depth: DepthFrame,
    src: CameraCalibration,
    dst: CameraCalibration,
    cfg: SynthesisConfig,
    color_valid: Optional[np.ndarray] = None,
    layer: str = LAYER_FG,
) -> LayerContribution:
    """Warp one camera's layer into the virtual camera.

    Forward-warps Valid depths through a z-buffer with a square splat, closes
    single-pixel cracks with a median over valid neighbors, then fetches color
    by unprojecting each covered virtual pixel back into the source image
    (backward mapping). ``color_valid`` restricts which source pixels may
    provide color; it defaults to the depth validity.
    """
    if (color.height, color.width) != (depth.height, depth.width):
        raise ValueError("color and depth dimensions differ")
    dk = dst.intrinsics
    out_shape = (dk.height, dk.width)

    src_valid = depth.valid_mask
    if color_valid is None:
        color_valid = src_valid

    # stage 1: forward depth warp with z-buffer and splat
    world = unproject_map(depth.depth, src)
    uv, z, in_front = project_points(world.reshape(-1, 3), dst)
    flat_valid = src_valid.reshape(-1) & in_front & (z > 0)
    uv = np.where(flat_valid[:, None], uv, 0.0)  # NaN-free for the int cast
    ui = np.round(uv[:, 0]).astype(np.int64)
    vi = np.round(uv[:, 1]).astype(np.int64)

    z_center = np.full(out_shape, np.inf)
    z_splat = np.full(out_shape, np.inf)
    r = cfg.splat_radius
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            tu = ui + dx
            tv = vi + dy
            ok = flat_valid & (tu >= 0) & (tu < dk.width) & (tv >= 0) & (tv < dk.height)
            target = z_center if (dy == 0 and dx == 0) else z_splat
            np.minimum.at(target, (tv[ok], tu[ok]), z[ok])

    # A pixel's own projected sample always wins; neighbor splats only plug
    # pixels nothing projected to. For foreground layers, splats outside the
    # directly-covered region are kept only where they close interior cracks,
    # so object silhouettes are not dilated. Background layers keep all
    # splats: their coverage boundary is a visibility frontier, not an object
    # edge, and obliquely-seen surfaces need the splats to stay gap-free.
    center_cov = np.isfinite(z_center)
    zbuf = np.where(center_cov, z_center, z_splat)
    if layer == LAYER_FG:
        splat_only = np.isfinite(zbuf) & ~center_cov
        if splat_only.any():
            nbc = _neighbor_count(center_cov)
            zbuf[splat_only & (nbc < _CRACK_SUPPORT)] = np.inf

    # stage 2: close cracks left between splats
    zbuf = _crack_fill_median(zbuf, cfg.crack_fill_window)

    # stage 3: backward color fetch at the warped depth
    covered = np.isfinite(zbuf)
    out_color = np.zeros(out_shape + (3,))
    out_valid = np.zeros(out_shape, dtype=bool)
    if covered.any():
        zc = np.where(covered, zbuf, 1.0)
        world_v = unproject_map(zc, dst).reshape(-1, 3)
        uv_s, z_s, front_s = project_points(world_v, src)
        cov = covered.reshape(-1) & front_s
        us = uv_s[cov, 0]
        vs = uv_s[cov, 1]
        sk = src.intrinsics
        # clamp-to-edge within the outer half-pixel band; beyond it the
        # source camera genuinely did not see the point
        inb = (us >= -0.5) & (us <= sk.width - 0.5) & \
              (vs >= -0.5) & (vs <= sk.height - 0.5)
        fetched, ok = _bilinear_fetch(color.pixels.astype(np.float64),
                                      color_valid,
                                      np.clip(us, 0, sk.width - 1),
                                      np.clip(vs, 0, sk.height - 1))
        ok &= inb
        flat_idx = np.flatnonzero(cov)[ok]
        out_color.reshape(-1, 3)[flat_idx] = fetched[ok]
        out_valid.reshape(-1)[flat_idx] = True

    dist = camera_distance(src.pose, dst.pose)
    zbuf = np.where(out_valid, zbuf, 0.0)
    return LayerContribution(
        layer=layer,
        camera_id=src.id,
        color=out_color,
        depth=zbuf,
        valid=out_valid,
        weight=1.0 / (dist + cfg.mixing_epsilon),
    )


def mix_layer(contribs: Sequence[LayerContribution],
              cfg: SynthesisConfig) -> MergedLayer:
    """Distance-weighted per-pixel blend of same-layer contributions.

    Only contributions whose depth agrees with the per-pixel minimum within
    the relative band participate; farther ones are occluded. Participating
    weights are renormalized per pixel.
    """
    if not contribs:
        raise ValueError("need at least one contribution")
    shape = contribs[0].valid.shape
    z_min = np.full(shape, np.inf)
    for c in contribs:
        z_min = np.where(c.valid & (c.depth < z_min), c.depth, z_min)

    band = cfg.depth_band_rel * z_min
    color_acc = np.zeros(shape + (3,))
    depth_acc = np.zeros(shape)
    w_acc = np.zeros(shape)
    for c in contribs:
        part = c.valid & (c.depth <= z_min + band)
        w = np.where(part, c.weight, 0.0)
        color_acc += w[..., None] * c.color
        depth_acc += w * c.depth
        w_acc += w

    valid = w_acc > 0
    color = np.zeros_like(color_acc)
    depth = np.zeros_like(depth_acc)
    color[valid] = color_acc[valid] / w_acc[valid, None]
    depth[valid] = depth_acc[valid] / w_acc[valid]
    return MergedLayer(color=color, depth=depth, valid=valid)


def composite(
    fg: MergedLayer,
    bg: MergedLayer,
    cfg: SynthesisConfig,
    return_provenance: bool = False,
):
    """Stack FG over BG; uncovered pixels take the hole color.

    Provenance codes: 0 hole, 1 background, 2 foreground.
    """
    if fg.valid.shape != bg.valid.shape:
        raise ValueError("layer dimensions differ")
    h, w = fg.valid.shape
    out = np.empty((h, w, 3))
    out[:] = np.asarray(cfg.hole_color, dtype=np.float64)
    out[bg.valid] = bg.color[bg.valid]
    out[fg.valid] = fg.color[fg.valid]
    frame = ColorFrame(w, h, np.clip(np.round(out), 0, 255).astype(np.uint8))
    if not return_provenance:
        return frame
    prov = np.zeros((h, w), dtype=np.uint8)
    prov[bg.valid] = 1
    prov[fg.valid] = 2
    return frame, prov


@dataclass(frozen=True)
class CameraStreamInputs:
    """Everything one reference camera contributes to a synthesized view."""

    calib: CameraCalibration
    live_color: ColorFrame
    live_depth: DepthFrame  # FG pixels Valid, BG pixels Background, holes Invalid
    bg_depth: DepthFrame  # static model, Valid everywhere it is known


def synthesize_view(
    virtual: CameraCalibration,
    inputs: Mapping[int, CameraStreamInputs],
    refs: Sequence[int],
    cfg: SynthesisConfig,
    return_provenance: bool = False,
):
    """Render the virtual view from the given reference cameras.

    FG layers warp live depth with live color; BG layers warp the static
    depth model with the live color of BG-classified pixels (live color keeps
    shadows and spill natural).
    """
    if not refs:
        raise ValueError("need at least one reference camera")
    fg_contribs: List[LayerContribution] = []
    bg_contribs: List[LayerContribution] = []
    for rid in refs:
        if rid not in inputs:
            raise ValueError(f"missing inputs for reference camera {rid}")
        s = inputs[rid]
        fg_contribs.append(
            warp_layer(s.live_color, s.live_depth, s.calib, virtual, cfg)
        )
        bg_mask = s.live_depth.validity == Validity.BACKGROUND
        bg_contribs.append(
            warp_layer(s.live_color, s.bg_depth, s.calib, virtual, cfg,
                       color_valid=bg_mask, layer=LAYER_BG)
        )
    fg = mix_layer(fg_contribs, cfg)
    bg = mix_layer(bg_contribs, cfg)
    return composite(fg, bg, cfg, return_provenance=return_provenance)


@dataclass(frozen=True)
class DebugBundle:
    """Intermediate rasters of one synthesized frame, for golden-image tests."""

    fg_contributions: Tuple[LayerContribution, ...]
    bg_contributions: Tuple[LayerContribution, ...]
    fg: MergedLayer
    bg: MergedLayer
    provenance: np.ndarray  # (H, W) uint8: 0 hole, 1 bg, 2 fg


def synthesize_view_debug(
    virtual: CameraCalibration,
    inputs: Mapping[int, "CameraStreamInputs"],
    refs: Sequence[int],
    cfg: SynthesisConfig,
):
    """synthesize_view plus every intermediate layer raster."""
    fg_contribs = []
    bg_contribs = []
    for rid in refs:
        if rid not in inputs:
            raise ValueError(f"missing inputs for reference camera {rid}")
        s = inputs[rid]
        fg_contribs.append(warp_layer(s.live_color, s.live_depth, s.calib,
                                      virtual, cfg))
        bg_mask = s.live_depth.validity == Validity.BACKGROUND
        bg_contribs.append(warp_layer(s.live_color, s.bg_depth, s.calib, virtual,
                                      cfg, color_valid=bg_mask, layer=LAYER_BG))
    fg = mix_layer(fg_contribs, cfg)
    bg = mix_layer(bg_contribs, cfg)
    frame, prov = composite(fg, bg, cfg, return_provenance=True)
    return frame, DebugBundle(tuple(fg_contribs), tuple(bg_contribs), fg, bg, prov)


def write_debug_bundle(root, frame_id: int, bundle: DebugBundle,
                       timestamp_us: int = 0) -> None:
    """Dump a frame's layer rasters in the MVD container layout.

    Contributions land in ``<root>/<layer>/`` keyed by source camera;
    merged layers use the reserved virtual camera slot 15; the provenance
    map is an 8-bit PNG next to them.
    """
    from pathlib import Path

    from PIL import Image

    from .core import MvdFrame
    from .mvdio import MvdWriter

    root = Path(root)

    def to_frame(camera_id, color, depth, valid):
        h, w = valid.shape
        validity = np.where(valid, Validity.VALID, Validity.INVALID).astype(np.uint8)
        d = np.where(valid, depth, 0.0).astype(np.float32)
        px = np.clip(np.round(color), 0, 255).astype(np.uint8)
        return MvdFrame(camera_id=camera_id,
                        color=ColorFrame(w, h, px, timestamp_us),
                        depth=DepthFrame(w, h, d, validity, timestamp_us))

    for layer_name, contribs, merged in (("fg", bundle.fg_contributions, bundle.fg),
                                         ("bg", bundle.bg_contributions, bundle.bg)):
        h, w = merged.valid.shape
        with MvdWriter(root / layer_name, 0.0, w, h) as writer:
            for c in contribs:
                writer.write_frame(frame_id, to_frame(c.camera_id, c.color,
                                                      c.depth, c.valid))
            writer.write_frame(frame_id, to_frame(15, merged.color, merged.depth,
                                                  merged.valid))
    Image.fromarray(bundle.provenance, mode="L").save(
        root / f"{frame_id:06d}.provenance.png")


def view_psnr(
    synth: ColorFrame,
    oracle: ColorFrame,
    exclude: Optional[np.ndarray] = None,
) -> float:
    """Peak signal-to-noise ratio in dB over non-excluded pixels.

    Identical images report math.inf. Raises when every pixel is excluded.
    """
    if (synth.height, synth.width) != (oracle.height, oracle.width):
        raise ValueError("image dimensions differ")
    keep = np.ones((synth.height, synth.width), dtype=bool)
    if exclude is not None:
        keep &= ~np.asarray(exclude, dtype=bool)
    if not keep.any():
        raise ValueError("all pixels excluded; PSNR undefined")
    a = synth.pixels[keep].astype(np.float64)
    b = oracle.pixels[keep].astype(np.float64)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def border_mask(height: int, width: int, border: int) -> np.ndarray:
    """True on a frame border of the given width."""
    m = np.zeros((height, width), dtype=bool)
    if border > 0:
        m[:border, :] = True
        m[-border:, :] = True
        m[:, :border] = True
        m[:, -border:] = True
    return m
