"""ONU emulator: per-AllocID queues fed by traffic profiles.

Each frame an ONU enqueues arrivals, reports every queue's occupancy, and
later drains queues FIFO against the grants addressed to it. Packets may
straddle grants; byte accounting stays exact.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

from vdba.dbru import DbruReport
from vdba.frame import FRAME_DURATION_NS, WORD_BYTES, PhysicalBandwidthMap

_BITS_PER_BYTE_NS = 8 * 1_000_000_000  # rate_bps * ns / this = bytes


@dataclass(frozen=True, slots=True)
class Cbr:
    """Constant bit rate. Without ``packet_bytes`` each frame's arrivals form one packet."""

    rate_bps: int
    packet_bytes: int | None = None

    kind = "cbr"


@dataclass(frozen=True, slots=True)
class Poisson:
    """Poisson packet arrivals of fixed size ``mean_pkt_bytes`` at ``mean_rate_bps`` on average."""

    mean_rate_bps: int
    mean_pkt_bytes: int = 1500

    kind = "poisson"


@dataclass(frozen=True, slots=True)
class OnOff:
    """CBR at ``rate_bps`` for the first ``duty`` fraction of every ``period_frames``."""

    rate_bps: int
    duty: float
    period_frames: int
    phase_frames: int = 0
    packet_bytes: int | None = None

    kind = "onoff"


TrafficProfile = Union[Cbr, Poisson, OnOff]


def profile_from_dict(d: dict) -> TrafficProfile:
    d = dict(d)
    kind = d.pop("kind")
    cls = {"cbr": Cbr, "poisson": Poisson, "onoff": OnOff}.get(kind)
    if cls is None:
        raise ValueError(f"unknown traffic profile kind {kind!r}")
    p = cls(**d)
    rates = [getattr(p, a) for a in ("rate_bps", "mean_rate_bps") if hasattr(p, a)]
    if any(r < 0 for r in rates):
        raise ValueError("rates must be >= 0")
    if getattr(p, "packet_bytes", None) is not None and p.packet_bytes <= 0:
        raise ValueError("packet_bytes must be positive")
    if isinstance(p, Poisson) and p.mean_pkt_bytes <= 0:
        raise ValueError("mean_pkt_bytes must be positive")
    if isinstance(p, OnOff) and not (0 <= p.duty <= 1 and p.period_frames > 0):
        raise ValueError("onoff needs 0 <= duty <= 1 and period_frames > 0")
    return p


class TransmissionRecord(NamedTuple):
    onu_id: int
    alloc_id: int
    arrival_frame: int
    transmit_frame: int
    size_bytes: int
    start_word: int = 0

    @property
    def latency_frames(self) -> int:
        return self.transmit_frame - self.arrival_frame

    def latency_ns(self, frame_duration_ns: int, word_time_ns: float) -> float:
        return self.latency_frames * frame_duration_ns + self.start_word * word_time_ns


@dataclass
class AllocQueue:
    alloc_id: int
    profile: TrafficProfile
    limit_bytes: int | None = None
    packets: deque = field(default_factory=deque)  # [arrival_frame, remaining, size]
    occupancy: int = 0
    enqueued: int = 0
    dequeued: int = 0
    dropped: int = 0
    credit: int = 0  # rate_bps * ns carried between frames

    def push(self, frame_index: int, size: int) -> None:
        if self.limit_bytes is not None and self.occupancy + size > self.limit_bytes:
            self.dropped += size
            return
        self.packets.append([frame_index, size, size])
        self.occupancy += size
        self.enqueued += size

    def conserved(self, deep: bool = True) -> bool:
        """Byte accounting holds; ``deep`` also re-sums the packet list."""
        if self.occupancy < 0 or self.enqueued - self.dequeued != self.occupancy:
            return False
        return not deep or sum(p[1] for p in self.packets) == self.occupancy


@dataclass
class OnuState:
    onu_id: int
    queues: dict[int, AllocQueue]
    rng_seed: int = 0
    frame_duration_ns: int = FRAME_DURATION_NS
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.rng = np.random.default_rng(self.rng_seed)

    @classmethod
    def build(cls, onu_id: int, profiles: dict[int, TrafficProfile], rng_seed: int = 0, **kw) -> OnuState:
        limit = kw.pop("buffer_bytes", None)
        queues = {a: AllocQueue(a, p, limit) for a, p in sorted(profiles.items())}
        return cls(onu_id, queues, rng_seed, **kw)

    @property
    def occupancy(self) -> int:
        return sum(q.occupancy for q in self.queues.values())

    def conserved(self, deep: bool = True) -> bool:
        return all(q.conserved(deep) for q in self.queues.values())


def _arrivals(q: AllocQueue, frame_index: int, frame_ns: int, rng: np.random.Generator) -> list[int]:
    p = q.profile
    if isinstance(p, Poisson):
        if p.mean_rate_bps == 0:
            return []
        lam = p.mean_rate_bps * frame_ns / (_BITS_PER_BYTE_NS * p.mean_pkt_bytes)
        return [p.mean_pkt_bytes] * int(rng.poisson(lam))
    if isinstance(p, OnOff):
        pos = (frame_index + p.phase_frames) % p.period_frames
        if pos >= p.duty * p.period_frames:
            return []
    q.credit += p.rate_bps * frame_ns
    if p.packet_bytes is None:
        n, q.credit = divmod(q.credit, _BITS_PER_BYTE_NS)
        return [n] if n else []
    n, q.credit = divmod(q.credit, _BITS_PER_BYTE_NS * p.packet_bytes)
    return [p.packet_bytes] * n


def advance_frame(onu: OnuState, frame_index: int) -> tuple[OnuState, list[DbruReport]]:
    """Enqueue one frame of arrivals and report every queue's occupancy.

    Mutates ``onu`` and returns it with one report per AllocID.
    """
    reports = []
    for alloc_id, q in onu.queues.items():
        for size in _arrivals(q, frame_index, onu.frame_duration_ns, onu.rng):
            q.push(frame_index, size)
        reports.append(DbruReport(frame_index, onu.onu_id, alloc_id, q.occupancy))
    return onu, reports


def apply_grants(onu: OnuState, bmap: PhysicalBandwidthMap) -> tuple[OnuState, list[TransmissionRecord]]:
    """Drain this ONU's queues FIFO against its grants in ``bmap``."""
    records = []
    for g in bmap.grants:
        if g.onu_id != onu.onu_id:
            continue
        q = onu.queues.get(g.alloc_id)
        if q is None:
            continue
        budget = min(g.grant_words * WORD_BYTES, q.occupancy)
        q.occupancy -= budget
        q.dequeued += budget
        pkts = q.packets
        while budget:
            head = pkts[0]
            if head[1] <= budget:
                budget -= head[1]
                pkts.popleft()
                records.append(
                    TransmissionRecord(onu.onu_id, g.alloc_id, head[0], bmap.frame_index, head[2], g.start_word)
                )
            else:
                head[1] -= budget
                budget = 0
    return onu, records
