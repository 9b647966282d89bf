"""On-disk MVD container.

Layout (version 1), rooted at a directory:

    container.json                    index: version, fps, dimensions, cameras
    cam{ID:02d}/{SEQ:06d}.color.png   8-bit RGB
    cam{ID:02d}/{SEQ:06d}.depth.u16le little-endian uint16 millimeters, row-major
    cam{ID:02d}/{SEQ:06d}.json        sidecar: timestamp, camera id, sequence,
                                      validity run-length encoding

The sidecar RLE is over the row-major flattened validity raster as
``[[code, run_length], ...]``. Depth is stored at the 16-bit millimeter
acquisition precision; reading restores metric float depth.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from PIL import Image

from .core import (
    ColorFrame,
    MvdFrame,
    depth_from_millimeters,
    depth_to_millimeters,
)

CONTAINER_VERSION = 1


def rle_encode(flat: np.ndarray) -> List[List[int]]:
    flat = np.asarray(flat).ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    return [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]


def rle_decode(runs: Sequence[Sequence[int]], size: int) -> np.ndarray:
    out = np.empty(size, dtype=np.uint8)
    pos = 0
    for code, n in runs:
        out[pos:pos + n] = code
        pos += n
    if pos != size:
        raise ValueError(f"RLE covers {pos} pixels, expected {size}")
    return out


class MvdWriter:
    def __init__(self, root: str | Path, fps: float, width: int, height: int):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.fps = fps
        self.width = width
        self.height = height
        self._cameras: set[int] = set()

    def _paths(self, camera_id: int, seq: int) -> Tuple[Path, Path, Path]:
        d = self.root / f"cam{camera_id:02d}"
        d.mkdir(exist_ok=True)
        stem = d / f"{seq:06d}"
        return (stem.with_suffix(".color.png"),
                stem.with_suffix(".depth.u16le"),
                stem.with_suffix(".json"))

    def write_frame(self, seq: int, frame: MvdFrame) -> None:
        color_p, depth_p, meta_p = self._paths(frame.camera_id, seq)
        Image.fromarray(frame.color.pixels, mode="RGB").save(color_p)
        mm = depth_to_millimeters(frame.depth)
        depth_p.write_bytes(mm.astype("<u2").tobytes())
        meta_p.write_text(json.dumps({
            "timestamp_us": frame.timestamp_us,
            "camera_id": frame.camera_id,
            "sequence": seq,
            "width": frame.depth.width,
            "height": frame.depth.height,
            "validity_rle": rle_encode(frame.depth.validity),
        }))
        self._cameras.add(frame.camera_id)

    def close(self) -> None:
        (self.root / "container.json").write_text(json.dumps({
            "version": CONTAINER_VERSION,
            "fps": self.fps,
            "width": self.width,
            "height": self.height,
            "cameras": sorted(self._cameras),
        }, indent=2))

    def __enter__(self) -> "MvdWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class MvdReader:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        index = json.loads((self.root / "container.json").read_text())
        if index.get("version") != CONTAINER_VERSION:
            raise ValueError(f"unsupported container version {index.get('version')!r}")
        self.fps = index["fps"]
        self.width = index["width"]
        self.height = index["height"]
        self.cameras = index["cameras"]

    def sequences(self, camera_id: int) -> List[int]:
        d = self.root / f"cam{camera_id:02d}"
        return sorted(int(p.name.split(".")[0]) for p in d.glob("*.color.png"))

    def read_frame(self, camera_id: int, seq: int) -> MvdFrame:
        d = self.root / f"cam{camera_id:02d}"
        stem = d / f"{seq:06d}"
        meta = json.loads(stem.with_suffix(".json").read_text())
        w, h = meta["width"], meta["height"]
        pixels = np.asarray(Image.open(stem.with_suffix(".color.png")), dtype=np.uint8)
        mm = np.frombuffer(stem.with_suffix(".depth.u16le").read_bytes(),
                           dtype="<u2").reshape(h, w)
        validity = rle_decode(meta["validity_rle"], w * h).reshape(h, w)
        ts = meta["timestamp_us"]
        return MvdFrame(
            camera_id=meta["camera_id"],
            color=ColorFrame(w, h, pixels, ts),
            depth=depth_from_millimeters(mm, validity, ts),
        )

    def frames(self, camera_id: int) -> Iterator[MvdFrame]:
        for seq in self.sequences(camera_id):
            yield self.read_frame(camera_id, seq)
