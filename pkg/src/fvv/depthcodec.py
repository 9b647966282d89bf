"""12-bit depth coding chain.

Non-linear inverse-depth quantization to a 12-bit disparity map with reserved
codes (0 background, 1 invalid/out-of-range), bit re-arrangement of the 12-bit
map into an 8-bit YUV420 raster (LSB fold + MSB nibble interleave), exact
inverses, and a pluggable lossless byte compressor stage.

All operations are pure; maps and images are immutable values.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from .core import ColorFrame, DepthFrame, DepthRange, Validity

DISPARITY_MAX = 4095
CODE_BACKGROUND = 0
CODE_INVALID = 1
CODE_MIN_VALID = 2
LEVELS = 2**12 - 3  # 4093 usable quantization steps between the reserved codes

GUARD_BAND = 0.01  # clamp-vs-invalidate band around [z_near, z_far]


@dataclass(frozen=True)
class DisparityMap12:
    """12-bit non-linear disparity raster with reserved codes 0 and 1."""

    width: int
    height: int
    values: np.ndarray  # (height, width) uint16 in [0, 4095]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.uint16)
        if v.shape != (self.height, self.width):
            raise ValueError(f"values shape {v.shape} != {self.height}x{self.width}")
        if v.size and v.max() > DISPARITY_MAX:
            raise ValueError("disparity values exceed 12 bits")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Yuv420Image:
    y: np.ndarray  # (height, width) uint8
    u: np.ndarray  # (height/2, width/2) uint8
    v: np.ndarray  # (height/2, width/2) uint8

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.uint8)
        u = np.asarray(self.u, dtype=np.uint8)
        v = np.asarray(self.v, dtype=np.uint8)
        h, w = y.shape
        if h % 2 or w % 2:
            raise ValueError("YUV420 dimensions must be even")
        if u.shape != (h // 2, w // 2) or v.shape != (h // 2, w // 2):
            raise ValueError("chroma plane sizes inconsistent with luma")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @property
    def height(self) -> int:
        return self.y.shape[0]

    def planes_bytes(self) -> bytes:
        return self.y.tobytes() + self.u.tobytes() + self.v.tobytes()


# ---------------------------------------------------------------------------
# Inverse-depth quantization with reserved codes


def quantize12(depth: DepthFrame, range_: DepthRange) -> DisparityMap12:
    """Map metric depth to 12-bit disparity codes.

    Background pixels take code 0 and Invalid pixels code 1. Valid depths
    within a 1% guard band of [z_near, z_far] are clamped to the range; depths
    farther out also take code 1. Inside the range the code is

        Y = round_half_up(4093 * (1/z - 1/z_far) / (1/z_near - 1/z_far) + 2)
    """
    zn, zf = range_.z_near, range_.z_far
    z = depth.depth.astype(np.float64)
    validity = depth.validity

    out = np.full(z.shape, CODE_INVALID, dtype=np.uint16)
    out[validity == Validity.BACKGROUND] = CODE_BACKGROUND

    in_band = (
        (validity == Validity.VALID)
        & (z >= zn * (1.0 - GUARD_BAND))
        & (z <= zf * (1.0 + GUARD_BAND))
    )
    zc = np.clip(z, zn, zf)
    inv_span = 1.0 / zn - 1.0 / zf
    frac = (1.0 / zc - 1.0 / zf) / inv_span
    code = np.floor(LEVELS * frac + CODE_MIN_VALID + 0.5)  # round half up
    code = np.clip(code, CODE_MIN_VALID, DISPARITY_MAX)
    out[in_band] = code[in_band].astype(np.uint16)
    return DisparityMap12(depth.width, depth.height, out)


def dequantize_codes(codes: np.ndarray, range_: DepthRange) -> np.ndarray:
    """Mathematical inverse of the code mapping, in float64 meters.

    Reserved codes come back as 0; this is the codec-exact value before the
    32-bit depth raster stores it.
    """
    zn, zf = range_.z_near, range_.z_far
    inv_span = 1.0 / zn - 1.0 / zf
    frac = (codes.astype(np.float64) - CODE_MIN_VALID) / LEVELS
    with np.errstate(divide="ignore"):
        z = 1.0 / (frac * inv_span + 1.0 / zf)
    z[codes < CODE_MIN_VALID] = 0.0
    return z


def dequantize12(d: DisparityMap12, range_: DepthRange,
                 timestamp_us: int = 0) -> DepthFrame:
    """Exact inverse of the quantizer's mapping; reserved codes round-trip."""
    codes = d.values
    validity = np.full(codes.shape, Validity.VALID, dtype=np.uint8)
    validity[codes == CODE_BACKGROUND] = Validity.BACKGROUND
    validity[codes == CODE_INVALID] = Validity.INVALID
    z = dequantize_codes(codes, range_)
    z[validity != Validity.VALID] = 0.0
    return DepthFrame(d.width, d.height, z.astype(np.float32), validity,
                      timestamp_us)


# ---------------------------------------------------------------------------
# Bit re-arrangement into YUV420

# nibble interleave: a3 b3 a2 b2 a1 b1 a0 b0 (a3 at bit 7)
_INTERLEAVE_LUT = np.zeros((16, 16), dtype=np.uint8)
for _a in range(16):
    for _b in range(16):
        _v = 0
        for _bit in range(4):
            _v |= ((_a >> _bit) & 1) << (2 * _bit + 1)
            _v |= ((_b >> _bit) & 1) << (2 * _bit)
        _INTERLEAVE_LUT[_a, _b] = _v

_DEINTERLEAVE_A = np.zeros(256, dtype=np.uint16)
_DEINTERLEAVE_B = np.zeros(256, dtype=np.uint16)
for _c in range(256):
    _a = _b = 0
    for _bit in range(4):
        _a |= ((_c >> (2 * _bit + 1)) & 1) << _bit
        _b |= ((_c >> (2 * _bit)) & 1) << _bit
    _DEINTERLEAVE_A[_c] = _a
    _DEINTERLEAVE_B[_c] = _b


def fold_lsb(values: np.ndarray) -> np.ndarray:
    """Y-channel byte for 12-bit values: LSB8, mirrored when MSB4 is odd.

    Removes the 255->0 jumps between contiguous 12-bit values so neighbour
    Y bytes stay correlated.
    """
    msb = values >> 8
    lsb = values & 0xFF
    return np.where(msb % 2 == 0, lsb, 255 - lsb).astype(np.uint8)


def unfold_lsb(y: np.ndarray, msb: np.ndarray) -> np.ndarray:
    return np.where(msb % 2 == 0, y, 255 - y).astype(np.uint16)


def pack_yuv420(d: DisparityMap12) -> Yuv420Image:
    """Re-arrange a 12-bit disparity map into an 8-bit YUV420 raster.

    Per 2x2 block: folded LSB8s fill Y; the four MSB4 nibbles go to U
    (top row pair, interleaved) and V (bottom row pair, interleaved).
    """
    if d.width % 2 or d.height % 2:
        raise ValueError("disparity map dimensions must be even")
    vals = d.values
    y = fold_lsb(vals)
    msb = (vals >> 8).astype(np.uint8)
    u = _INTERLEAVE_LUT[msb[0::2, 0::2], msb[0::2, 1::2]]
    v = _INTERLEAVE_LUT[msb[1::2, 0::2], msb[1::2, 1::2]]
    return Yuv420Image(y, u, v)


def pack_yuv420_naive(d: DisparityMap12) -> Yuv420Image:
    """Straight packing kept as the compressibility baseline.

    Raw LSB8 to Y (no fold), MSB nibble pairs packed planar (first pixel in
    the high nibble) to U/V. Used by the codec benchmark to show what the
    fold and interleave buy.
    """
    if d.width % 2 or d.height % 2:
        raise ValueError("disparity map dimensions must be even")
    vals = d.values
    y = (vals & 0xFF).astype(np.uint8)
    msb = (vals >> 8).astype(np.uint8)
    u = ((msb[0::2, 0::2] << 4) | msb[0::2, 1::2]).astype(np.uint8)
    v = ((msb[1::2, 0::2] << 4) | msb[1::2, 1::2]).astype(np.uint8)
    return Yuv420Image(y, u, v)


def unpack_yuv420(img: Yuv420Image) -> DisparityMap12:
    """Bit-exact inverse of pack_yuv420."""
    h, w = img.y.shape
    msb = np.empty((h, w), dtype=np.uint16)
    msb[0::2, 0::2] = _DEINTERLEAVE_A[img.u]
    msb[0::2, 1::2] = _DEINTERLEAVE_B[img.u]
    msb[1::2, 0::2] = _DEINTERLEAVE_A[img.v]
    msb[1::2, 1::2] = _DEINTERLEAVE_B[img.v]
    lsb = unfold_lsb(img.y.astype(np.uint16), msb)
    return DisparityMap12(w, h, (msb << 8) | lsb)


# ---------------------------------------------------------------------------
# Encoded frames and the codec registry

MEDIA_COLOR = 0
MEDIA_DEPTH = 1

CODEC_RAW = 0  # passthrough
CODEC_ZLIB = 1  # general-purpose dictionary/entropy byte compressor
CODEC_PRED_RICE = 2  # MED spatial prediction + Golomb-Rice; depth default

_HEADER = struct.Struct(">BBHHQI")  # codec, media, width, height, timestamp, length


@dataclass(frozen=True)
class EncodedFrame:
    media_type: int
    codec_id: int
    width: int
    height: int
    timestamp_us: int
    payload: bytes

    def serialize(self) -> bytes:
        return _HEADER.pack(self.codec_id, self.media_type, self.width,
                            self.height, self.timestamp_us, len(self.payload)) \
               + self.payload

    @staticmethod
    def deserialize(data: bytes) -> "EncodedFrame":
        if len(data) < _HEADER.size:
            raise ValueError("encoded frame truncated")
        codec, media, w, h, ts, n = _HEADER.unpack_from(data)
        if len(data) != _HEADER.size + n:
            raise ValueError("encoded frame length mismatch")
        return EncodedFrame(media, codec, w, h, ts, data[_HEADER.size:])


class UnsupportedCodecError(ValueError):
    pass


class DecodeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# MED + Golomb-Rice plane compressor
#
# Smooth depth fields are what the packing stage is built for, and the codecs
# it substitutes for are prediction-based. Each plane is predicted with the
# LOCO-I median predictor; zig-zagged residuals are Rice-coded with a
# per-plane parameter, and the bitstream is deflated only when that helps
# (flat planes). The bit kernels run under numba when available; the pure
# Python path is bit-identical.


def _med_residuals_py(x):
    h, w = x.shape
    r = np.empty((h, w), np.int32)
    for i in range(h):
        for j in range(w):
            a = x[i, j - 1] if j > 0 else 0
            b = x[i - 1, j] if i > 0 else 0
            c = x[i - 1, j - 1] if (i > 0 and j > 0) else 0
            mx = a if a > b else b
            mn = a if a < b else b
            if c >= mx:
                p = mn
            elif c <= mn:
                p = mx
            else:
                p = a + b - c
            r[i, j] = x[i, j] - p
    return r


def _med_reconstruct_py(r):
    h, w = r.shape
    x = np.empty((h, w), np.int32)
    for i in range(h):
        for j in range(w):
            a = x[i, j - 1] if j > 0 else 0
            b = x[i - 1, j] if i > 0 else 0
            c = x[i - 1, j - 1] if (i > 0 and j > 0) else 0
            mx = a if a > b else b
            mn = a if a < b else b
            if c >= mx:
                p = mn
            elif c <= mn:
                p = mx
            else:
                p = a + b - c
            x[i, j] = r[i, j] + p
    return x


def _rice_encode_py(zz, k):
    nbits = 0
    for v in zz:
        nbits += (int(v) >> k) + 1 + k
    out = np.zeros((nbits + 7) // 8, np.uint8)
    pos = 0
    for v in zz:
        v = int(v)
        pos += v >> k
        out[pos >> 3] |= 1 << (7 - (pos & 7))
        pos += 1
        for bi in range(k - 1, -1, -1):
            if (v >> bi) & 1:
                out[pos >> 3] |= 1 << (7 - (pos & 7))
            pos += 1
    return out


def _rice_decode_py(buf, n, k):
    """Returns (symbols, ok); ok is False when the stream runs out early."""
    zz = np.zeros(n, np.int64)
    nbits = buf.size * 8
    pos = 0
    for s in range(n):
        q = 0
        while pos < nbits and not (buf[pos >> 3] >> (7 - (pos & 7))) & 1:
            q += 1
            pos += 1
        if pos + 1 + k > nbits:
            return zz, False
        pos += 1
        rem = 0
        for _ in range(k):
            rem = (rem << 1) | ((buf[pos >> 3] >> (7 - (pos & 7))) & 1)
            pos += 1
        zz[s] = (q << k) | rem
    return zz, True


_med_residuals = _med_residuals_py
_med_reconstruct = _med_reconstruct_py
_rice_encode = _rice_encode_py
_rice_decode = _rice_decode_py

try:  # numba turns the bit kernels into native loops
    from numba import njit as _njit

    _med_residuals = _njit(cache=True)(_med_residuals_py)
    _med_reconstruct = _njit(cache=True)(_med_reconstruct_py)
    _rice_encode = _njit(cache=True)(_rice_encode_py)
    _rice_decode = _njit(cache=True)(_rice_decode_py)
except ImportError:  # pragma: no cover - numba is normally present
    pass

_PLANE_HEADER = struct.Struct(">BBIII")  # k, deflate flag, symbols, bytes, adler32


def _compress_plane(plane: np.ndarray) -> bytes:
    r = _med_residuals(plane.astype(np.int32)).ravel()
    zz = np.where(r >= 0, 2 * r, -2 * r - 1).astype(np.int64)
    costs = [(int(np.sum((zz >> k) + 1 + k)), k) for k in range(15)]
    k = min(costs)[1]
    stream = _rice_encode(zz, k).tobytes()
    deflated = zlib.compress(stream, 6)
    if len(deflated) < len(stream):
        blob, flag = deflated, 1
    else:
        blob, flag = stream, 0
    check = zlib.adler32(plane.tobytes())
    return _PLANE_HEADER.pack(k, flag, zz.size, len(blob), check) + blob


def _decompress_plane(data: bytes, offset: int, shape) -> Tuple[np.ndarray, int]:
    k, flag, n, blob_len, check = _PLANE_HEADER.unpack_from(data, offset)
    offset += _PLANE_HEADER.size
    blob = data[offset:offset + blob_len]
    if len(blob) != blob_len:
        raise DecodeError("plane blob truncated")
    offset += blob_len
    stream = zlib.decompress(blob) if flag else blob
    if n != shape[0] * shape[1]:
        raise DecodeError("plane symbol count mismatch")
    zz, ok = _rice_decode(np.frombuffer(stream, np.uint8), n, k)
    if not ok:
        raise DecodeError("rice stream truncated")
    r = np.where(zz % 2 == 0, zz // 2, -(zz + 1) // 2).astype(np.int32)
    x = _med_reconstruct(r.reshape(shape)).astype(np.uint8)
    if zlib.adler32(x.tobytes()) != check:
        raise DecodeError("plane checksum mismatch")
    return x, offset


_COMPRESSORS: Dict[int, Tuple[Callable[[bytes], bytes], Callable[[bytes], bytes]]] = {
    CODEC_RAW: (lambda b: b, lambda b: b),
    CODEC_ZLIB: (lambda b: zlib.compress(b, 6), zlib.decompress),
}


def register_codec(codec_id: int, compress: Callable[[bytes], bytes],
                   decompress: Callable[[bytes], bytes]) -> None:
    """Register an alternative lossless byte compressor under a codec id."""
    if codec_id in _COMPRESSORS or codec_id == CODEC_PRED_RICE:
        raise ValueError(f"codec id {codec_id} already registered")
    _COMPRESSORS[codec_id] = (compress, decompress)


def _codec(codec_id: int):
    try:
        return _COMPRESSORS[codec_id]
    except KeyError:
        raise UnsupportedCodecError(
            f"codec id {codec_id} is not a byte-stream codec") from None


def encode_lossless(img: Yuv420Image, timestamp_us: int = 0,
                    codec_id: int = CODEC_PRED_RICE) -> EncodedFrame:
    if codec_id == CODEC_PRED_RICE:
        payload = b"".join(_compress_plane(p) for p in (img.y, img.u, img.v))
    else:
        compress, _ = _codec(codec_id)
        payload = compress(img.planes_bytes())
    return EncodedFrame(MEDIA_DEPTH, codec_id, img.width, img.height,
                        timestamp_us, payload)


def decode_lossless(frame: EncodedFrame) -> Yuv420Image:
    w, h = frame.width, frame.height
    if frame.codec_id == CODEC_PRED_RICE:
        try:
            y, off = _decompress_plane(frame.payload, 0, (h, w))
            u, off = _decompress_plane(frame.payload, off, (h // 2, w // 2))
            v, off = _decompress_plane(frame.payload, off, (h // 2, w // 2))
        except DecodeError:
            raise
        except Exception as e:
            raise DecodeError(f"payload does not decode: {e}") from e
        if off != len(frame.payload):
            raise DecodeError("trailing bytes after planes")
        return Yuv420Image(y, u, v)
    _, decompress = _codec(frame.codec_id)
    try:
        raw = decompress(frame.payload)
    except Exception as e:
        raise DecodeError(f"payload does not decode: {e}") from e
    if len(raw) != w * h + 2 * (w // 2) * (h // 2):
        raise DecodeError("decoded plane size mismatch")
    y = np.frombuffer(raw, dtype=np.uint8, count=w * h).reshape(h, w)
    off = w * h
    cn = (w // 2) * (h // 2)
    u = np.frombuffer(raw, dtype=np.uint8, count=cn, offset=off).reshape(h // 2, w // 2)
    v = np.frombuffer(raw, dtype=np.uint8, count=cn, offset=off + cn).reshape(h // 2, w // 2)
    return Yuv420Image(y.copy(), u.copy(), v.copy())


def encode_color(frame: ColorFrame, codec_id: int = CODEC_ZLIB) -> EncodedFrame:
    """Pluggable color coding; the default configuration is lossless."""
    compress, _ = _codec(codec_id)
    return EncodedFrame(MEDIA_COLOR, codec_id, frame.width, frame.height,
                        frame.timestamp_us, compress(frame.pixels.tobytes()))


def decode_color(frame: EncodedFrame) -> ColorFrame:
    _, decompress = _codec(frame.codec_id)
    try:
        raw = decompress(frame.payload)
    except Exception as e:
        raise DecodeError(f"payload does not decode: {e}") from e
    w, h = frame.width, frame.height
    if len(raw) != w * h * 3:
        raise DecodeError("decoded color size mismatch")
    px = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return ColorFrame(w, h, px.copy(), frame.timestamp_us)


def stream_bitrate_mbps(payload_bytes: int, frames: int, fps: float) -> float:
    """Mean stream bitrate implied by recorded payload sizes."""
    if frames == 0:
        return 0.0
    return payload_bytes * 8.0 * fps / frames / 1e6
