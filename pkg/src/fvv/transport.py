"""MTU-bounded packetization, reassembly, camera selection, and a simulated
network between capture servers and the edge server.

Packet layout is bit-exact and big-endian; the simulator is a deterministic
event queue keyed by (time, sequence). Packets are immutable values.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import CameraCalibration, CameraPose, camera_distance
from .depthcodec import EncodedFrame

PACKET_VERSION = 1
HEADER_SIZE = 22

FLAG_FIRST = 0x01
FLAG_LAST = 0x02

MEDIA_COLOR = 0
MEDIA_DEPTH = 1
MEDIA_CONTROL = 2
MEDIA_CLOCK = 3

# version, flags, media, camera, seq, frag index, frag count, timestamp, length
_PKT = struct.Struct(">BBBBIHHQH")
assert _PKT.size == HEADER_SIZE


@dataclass(frozen=True)
class MediaPacket:
    version: int
    flags: int
    media_type: int
    camera_id: int
    sequence: int
    fragment_index: int
    fragment_count: int
    timestamp_us: int
    payload: bytes

    def __post_init__(self):
        if not (0 <= self.fragment_index < self.fragment_count):
            raise ValueError("fragment index must be below fragment count")
        first = bool(self.flags & FLAG_FIRST)
        last = bool(self.flags & FLAG_LAST)
        if first != (self.fragment_index == 0):
            raise ValueError("first-fragment flag inconsistent with index")
        if last != (self.fragment_index == self.fragment_count - 1):
            raise ValueError("last-fragment flag inconsistent with index")

    @property
    def size(self) -> int:
        return HEADER_SIZE + len(self.payload)

    def serialize(self) -> bytes:
        return _PKT.pack(self.version, self.flags, self.media_type,
                         self.camera_id, self.sequence, self.fragment_index,
                         self.fragment_count, self.timestamp_us,
                         len(self.payload)) + self.payload

    @staticmethod
    def deserialize(data: bytes) -> "MediaPacket":
        if len(data) < HEADER_SIZE:
            raise ValueError("packet truncated")
        ver, flags, media, cam, seq, fi, fc, ts, n = _PKT.unpack_from(data)
        if len(data) != HEADER_SIZE + n:
            raise ValueError("packet length mismatch")
        return MediaPacket(ver, flags, media, cam, seq, fi, fc, ts,
                           data[HEADER_SIZE:])


def packetize(frame: EncodedFrame, camera_id: int, sequence: int,
              mtu: int) -> List[MediaPacket]:
    """Fragment a serialized encoded frame into MTU-bounded packets.

    Concatenating the fragment payloads in index order reproduces the frame
    bytes exactly. An empty frame still produces one (zero-length) packet.
    """
    if mtu <= HEADER_SIZE + 1:
        raise ValueError(f"mtu {mtu} leaves no payload room (header {HEADER_SIZE})")
    data = frame.serialize()
    chunk = mtu - HEADER_SIZE
    count = max(1, -(-len(data) // chunk))
    if count > 0xFFFF:
        raise ValueError("frame needs more than 65535 fragments")
    packets = []
    for i in range(count):
        flags = (FLAG_FIRST if i == 0 else 0) | (FLAG_LAST if i == count - 1 else 0)
        packets.append(
            MediaPacket(
                version=PACKET_VERSION,
                flags=flags,
                media_type=frame.media_type,
                camera_id=camera_id,
                sequence=sequence,
                fragment_index=i,
                fragment_count=count,
                timestamp_us=frame.timestamp_us,
                payload=data[i * chunk:(i + 1) * chunk],
            )
        )
    return packets


# ---------------------------------------------------------------------------
# reassembly


@dataclass
class _Partial:
    fragment_count: int
    first_arrival_us: float
    fragments: Dict[int, bytes] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return len(self.fragments) == self.fragment_count


@dataclass(frozen=True)
class CompletedFrame:
    camera_id: int
    media_type: int
    sequence: int
    frame: EncodedFrame
    completed_at_us: float


@dataclass(frozen=True)
class DroppedFrame:
    camera_id: int
    media_type: int
    sequence: int
    reason: str  # "timeout" | "superseded"


class Reassembler:
    """Reorders, deduplicates, and reassembles packet fragments per stream.

    A frame is delivered only when every fragment is present; frames that
    time out or are overtaken by a completed newer frame on the same stream
    are dropped whole.
    """

    def __init__(self, timeout_us: float = 66_667.0):
        self.timeout_us = timeout_us
        self._partials: Dict[Tuple[int, int, int], _Partial] = {}
        self._delivered: Dict[Tuple[int, int], int] = {}  # stream -> newest seq

    def push(self, packet: MediaPacket, now_us: float
             ) -> List[CompletedFrame | DroppedFrame]:
        events: List[CompletedFrame | DroppedFrame] = []
        events.extend(self.expire(now_us))

        stream = (packet.camera_id, packet.media_type)
        key = stream + (packet.sequence,)
        newest = self._delivered.get(stream)
        if newest is not None and packet.sequence <= newest:
            return events  # late fragment of an already-finished frame

        part = self._partials.get(key)
        if part is None:
            part = _Partial(packet.fragment_count, now_us)
            self._partials[key] = part
        part.fragments.setdefault(packet.fragment_index, packet.payload)

        if part.complete:
            data = b"".join(part.fragments[i] for i in range(part.fragment_count))
            del self._partials[key]
            self._delivered[stream] = packet.sequence
            # an older unfinished frame on this stream will never display
            for k in [k for k in self._partials if k[:2] == stream
                      and k[2] < packet.sequence]:
                del self._partials[k]
                events.append(DroppedFrame(k[0], k[1], k[2], "superseded"))
            events.append(CompletedFrame(packet.camera_id, packet.media_type,
                                         packet.sequence,
                                         EncodedFrame.deserialize(data), now_us))
        return events

    def expire(self, now_us: float) -> List[DroppedFrame]:
        out = []
        for key in [k for k, p in self._partials.items()
                    if now_us - p.first_arrival_us > self.timeout_us]:
            del self._partials[key]
            out.append(DroppedFrame(key[0], key[1], key[2], "timeout"))
        return out

    @property
    def pending(self) -> int:
        return len(self._partials)


# ---------------------------------------------------------------------------
# adaptive camera selection


def select_cameras(
    virtual: CameraPose,
    rig: Sequence[CameraCalibration],
    n_tx: int,
    current: Optional[Iterable[int]] = None,
) -> List[int]:
    """The n_tx cameras nearest the virtual viewpoint, nearest first.

    Ties break toward lower ids; when ``current`` is given, ties prefer
    cameras already active so boundary poses cause no churn.
    """
    if not (1 <= n_tx <= len(rig)):
        raise ValueError(f"n_tx must be in [1, {len(rig)}]")
    cur = set(current) if current is not None else set()
    ranked = sorted(
        rig,
        key=lambda c: (camera_distance(c.pose, virtual), c.id not in cur, c.id),
    )
    return [c.id for c in ranked[:n_tx]]


def select_references(
    virtual: CameraPose,
    rig: Sequence[CameraCalibration],
    active: Iterable[int],
    k: int,
) -> List[int]:
    """The k nearest cameras of the active set; always a subset of it."""
    active = set(active)
    cams = [c for c in rig if c.id in active]
    if k > len(cams):
        raise ValueError(f"k={k} exceeds active set size {len(cams)}")
    ranked = sorted(cams, key=lambda c: (camera_distance(c.pose, virtual), c.id))
    return [c.id for c in ranked[:k]]


@dataclass(frozen=True)
class CameraSetCommand:
    """Edge-to-capture control message carrying the active camera bitmask."""

    bitmask: int  # u16, bit i set = camera i transmits
    issue_timestamp_us: int

    def __post_init__(self):
        if not (0 <= self.bitmask <= 0xFFFF):
            raise ValueError("bitmask must fit in 16 bits")

    @property
    def camera_ids(self) -> List[int]:
        return [i for i in range(16) if self.bitmask >> i & 1]

    @staticmethod
    def from_ids(ids: Iterable[int], issue_timestamp_us: int) -> "CameraSetCommand":
        mask = 0
        for i in ids:
            if not 0 <= i < 16:
                raise ValueError("camera ids must be in [0, 15]")
            mask |= 1 << i
        return CameraSetCommand(mask, issue_timestamp_us)

    def serialize(self) -> bytes:
        return struct.pack(">H", self.bitmask)

    @staticmethod
    def deserialize(data: bytes, issue_timestamp_us: int) -> "CameraSetCommand":
        (mask,) = struct.unpack(">H", data)
        return CameraSetCommand(mask, issue_timestamp_us)


def control_packet(cmd: CameraSetCommand, sequence: int) -> MediaPacket:
    return MediaPacket(
        version=PACKET_VERSION,
        flags=FLAG_FIRST | FLAG_LAST,
        media_type=MEDIA_CONTROL,
        camera_id=0xFF,
        sequence=sequence,
        fragment_index=0,
        fragment_count=1,
        timestamp_us=cmd.issue_timestamp_us,
        payload=cmd.serialize(),
    )


# ---------------------------------------------------------------------------
# event-driven network simulation


@dataclass(frozen=True)
class LinkConfig:
    bandwidth_bps: float = 1e9
    propagation_s: float = 1e-4
    loss_rate: float = 0.0
    mtu: int = 1500

    def __post_init__(self):
        if self.bandwidth_bps <= 0 or self.propagation_s < 0:
            raise ValueError("bandwidth must be positive, propagation non-negative")
        if not (0.0 <= self.loss_rate <= 1.0):
            raise ValueError("loss rate must be in [0, 1]")


@dataclass(frozen=True)
class Delivery:
    time_us: float
    link: str
    packet: MediaPacket


@dataclass
class _LinkState:
    config: LinkConfig
    busy_until_us: float = 0.0


class NetworkSim:
    """Deterministic store-and-forward simulator of point-to-point links.

    Delivery time = send time + FIFO queueing + serialization (size/bandwidth)
    + propagation. Lost packets occupy the link but are never delivered.
    """

    def __init__(self, seed: int = 0):
        self._rng = np.random.default_rng(seed)
        self._links: Dict[str, _LinkState] = {}
        self._pending: List[Tuple[float, int, str, MediaPacket]] = []
        self._tiebreak = 0
        self.sent = 0
        self.delivered = 0
        self.dropped = 0

    def add_link(self, name: str, config: LinkConfig) -> None:
        if name in self._links:
            raise ValueError(f"link {name!r} already exists")
        self._links[name] = _LinkState(config)

    def link_config(self, name: str) -> LinkConfig:
        return self._links[name].config

    def send(self, link: str, packet: MediaPacket, now_us: float) -> None:
        state = self._links[link]
        if packet.size > state.config.mtu:
            raise ValueError(
                f"packet of {packet.size} B exceeds link MTU {state.config.mtu}"
            )
        self.sent += 1
        start = max(now_us, state.busy_until_us)
        tx_us = packet.size * 8.0 / state.config.bandwidth_bps * 1e6
        state.busy_until_us = start + tx_us
        lost = (state.config.loss_rate > 0.0
                and self._rng.random() < state.config.loss_rate)
        if lost:
            self.dropped += 1
            return
        arrival = start + tx_us + state.config.propagation_s * 1e6
        self._tiebreak += 1
        heapq.heappush(self._pending, (arrival, self._tiebreak, link, packet))

    def next_event_time(self) -> Optional[float]:
        return self._pending[0][0] if self._pending else None

    def step(self, until_us: float) -> List[Delivery]:
        """Pop all deliveries with arrival time <= until_us, in order."""
        out = []
        while self._pending and self._pending[0][0] <= until_us:
            time_us, _, link, packet = heapq.heappop(self._pending)
            self.delivered += 1
            out.append(Delivery(time_us, link, packet))
        return out

    @property
    def in_flight(self) -> int:
        return len(self._pending)


# ---------------------------------------------------------------------------
# simulated clock synchronization


@dataclass(frozen=True)
class ClockSync:
    """Bounded-offset clock model standing in for a PTP exchange.

    ``offsets_us[unit]`` is the true clock offset of a capture unit versus the
    edge-server timebase; sync estimates it within ``bound_us`` and maps
    capture timestamps accordingly.
    """

    offsets_us: Dict[int, float]
    bound_us: float = 0.0
    seed: int = 0

    def estimates(self) -> Dict[int, float]:
        rng = np.random.default_rng(self.seed)
        return {
            unit: off + (rng.uniform(-self.bound_us, self.bound_us)
                         if self.bound_us > 0 else 0.0)
            for unit, off in self.offsets_us.items()
        }

    def map_timestamp(self, unit: int, timestamp_us: float) -> float:
        """Capture timestamp in the edge-server timebase."""
        return timestamp_us - self.estimates()[unit]

    def residual_us(self, unit: int) -> float:
        return abs(self.estimates()[unit] - self.offsets_us[unit])
