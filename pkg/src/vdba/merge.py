"""Merging engine: compose per-slice virtual maps into one physical map.

Slices are packed back to back in ascending (priority, slice_id) order with
no time remapping. Each slice is entitled to the head of its virtual map up
to its share; words beyond that are either surplus requests (eligible
slices) or overrun, which is clipped from the tail or rejected.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from vdba.engine import SliceDescriptor, SliceRegistry, water_fill
from vdba.frame import (
    DEFAULT_GUARD_WORDS,
    FrameClock,
    Grant,
    PhysicalBandwidthMap,
    VirtualBandwidthMap,
    VirtualRequest,
)

log = logging.getLogger(__name__)


class SurplusPolicy(str, Enum):
    NONE = "none"
    WEIGHTED_BY_SHARE = "weighted_by_share"
    ROUND_ROBIN = "round_robin"


class OverrunPolicy(str, Enum):
    CLIP_TAIL = "clip_tail"
    REJECT_MAP = "reject_map"


class MergeError(Exception):
    pass


class FrameMismatch(MergeError):
    pass


class DuplicateSlice(MergeError):
    pass


class MapRejected(MergeError):
    pass


@dataclass(frozen=True, slots=True)
class MergePolicy:
    guard_words: int = DEFAULT_GUARD_WORDS
    surplus_distribution: SurplusPolicy = SurplusPolicy.WEIGHTED_BY_SHARE
    overrun_handling: OverrunPolicy = OverrunPolicy.CLIP_TAIL

    def __post_init__(self) -> None:
        object.__setattr__(self, "surplus_distribution", SurplusPolicy(self.surplus_distribution))
        object.__setattr__(self, "overrun_handling", OverrunPolicy(self.overrun_handling))
        if self.guard_words < 0:
            raise ValueError("guard_words must be >= 0")


@dataclass
class MergeResult:
    bmap: PhysicalBandwidthMap
    granted: dict[str, int] = field(default_factory=dict)
    surplus: dict[str, int] = field(default_factory=dict)
    clipped: dict[str, int] = field(default_factory=dict)
    events: list[str] = field(default_factory=list)


def _burst_limited(requests: Sequence[VirtualRequest], limit: int, alloc_onu) -> int:
    """Words in the longest head of ``requests`` forming at most ``limit`` ONU bursts."""
    words, bursts, prev = 0, 0, None
    for r in requests:
        onu = alloc_onu[r.alloc_id]
        if onu != prev:
            bursts += 1
            if bursts > limit:
                break
            prev = onu
        words += r.grant_words
    return words


def merge_detailed(
    virtual_maps: Sequence[VirtualBandwidthMap],
    slices: SliceRegistry,
    clock: FrameClock,
    policy: MergePolicy = MergePolicy(),
    frame_index: int | None = None,
) -> MergeResult:
    guard = policy.guard_words
    strict = policy.overrun_handling is OverrunPolicy.REJECT_MAP
    frames = {m.frame_index for m in virtual_maps}
    if frame_index is not None:
        frames.add(frame_index)
    if len(frames) > 1:
        raise FrameMismatch(f"virtual maps span frames {sorted(frames)}")
    frame = frames.pop() if frames else 0

    by_slice: dict[str, VirtualBandwidthMap] = {}
    for m in virtual_maps:
        if m.slice_id in by_slice:
            raise DuplicateSlice(m.slice_id)
        if m.slice_id not in slices:
            raise MapRejected(f"map from unregistered slice {m.slice_id}")
        by_slice[m.slice_id] = m

    result = MergeResult(PhysicalBandwidthMap(frame))
    ordered: list[SliceDescriptor] = sorted(
        (slices[s] for s in by_slice), key=lambda s: (s.priority, s.slice_id)
    )
    alloc_onu = slices.alloc_onu
    owner = slices.alloc_slice.get

    plan = []  # (slice, usable requests, total, entitled words, excess words)
    for s in ordered:
        sid = s.slice_id
        reqs = []
        total = bursts = 0
        prev = None
        for r in by_slice[sid].requests:
            alloc_id, words = r[0], r[1]
            if words <= 0 or owner(alloc_id) != sid:
                if words:
                    if strict:
                        raise MapRejected(f"slice {sid}: bad request for alloc {alloc_id}")
                    result.events.append(f"slice {sid}: dropped request for alloc {alloc_id}")
                continue
            reqs.append(r)
            total += words
            onu = alloc_onu[alloc_id]
            if onu != prev:
                bursts += 1
                prev = onu
        entitled = min(total, s.share_words)
        if total > s.share_words and not s.surplus_eligible:
            if strict:
                raise MapRejected(f"slice {sid}: {total} words exceeds share {s.share_words}")
            result.events.append(f"slice {sid}: clipped {total - entitled} words")

        # a slice may not open more bursts than it owns AllocIDs, so the guard
        # budget reserved at registration always holds and other slices are unaffected
        if guard and bursts > len(s.allocs):
            limited = _burst_limited(reqs, len(s.allocs), alloc_onu)
            if limited < entitled:
                if strict:
                    raise MapRejected(f"slice {sid}: {bursts} bursts exceeds {len(s.allocs)} AllocIDs")
                result.events.append(f"slice {sid}: clipped at burst limit")
                entitled = limited

        excess = total - s.share_words if s.surplus_eligible and total > s.share_words else 0
        plan.append((s, reqs, total, entitled, excess))

    capacity = clock.upstream_capacity
    awards = [0] * len(plan)
    if policy.surplus_distribution is not SurplusPolicy.NONE and any(p[4] for p in plan):
        # guards counted over every candidate grant; dropping grants never adds boundaries
        boundaries, prev = 0, None
        for _, reqs, _, entitled, excess in plan:
            budget = entitled + excess
            for r in reqs:
                if budget <= 0:
                    break
                onu = alloc_onu[r.alloc_id]
                if onu != prev:
                    boundaries += prev is not None
                    prev = onu
                budget -= r.grant_words
        pool = capacity - sum(p[3] for p in plan) - boundaries * guard
        if pool > 0:
            if policy.surplus_distribution is SurplusPolicy.WEIGHTED_BY_SHARE:
                weights = [max(p[0].share_words, 1) for p in plan]
            else:
                weights = None
            awards = water_fill(pool, [p[4] for p in plan], weights, frame)

    grants: list[Grant] = []
    append = grants.append
    new_tuple = tuple.__new__  # skips NamedTuple's Python-level __new__
    cursor = 0
    prev_onu = None
    for (s, reqs, total, entitled, _), extra in zip(plan, awards):
        budget = allowed = entitled + extra
        for alloc_id, words, dbru, _ in reqs:
            if budget <= 0:
                break
            if words > budget:
                words = budget
            onu = alloc_onu[alloc_id]
            if onu != prev_onu:
                if prev_onu is not None:
                    cursor += guard
                prev_onu = onu
            append(new_tuple(Grant, (alloc_id, onu, cursor, words, dbru)))
            cursor += words
            budget -= words
        result.granted[s.slice_id] = allowed
        result.surplus[s.slice_id] = extra
        if total > allowed:
            result.clipped[s.slice_id] = total - allowed
    if cursor > capacity:
        raise RuntimeError(f"frame {frame}: layout reached word {cursor} > capacity {capacity}")
    for e in result.events:
        log.debug("frame %d: %s", frame, e)
    result.bmap = PhysicalBandwidthMap(frame, tuple(grants))
    return result


def merge(
    virtual_maps: Sequence[VirtualBandwidthMap],
    slices: SliceRegistry,
    clock: FrameClock,
    policy: MergePolicy = MergePolicy(),
    frame_index: int | None = None,
) -> PhysicalBandwidthMap:
    return merge_detailed(virtual_maps, slices, clock, policy, frame_index).bmap


def merge_latency_probe(
    virtual_maps: Sequence[VirtualBandwidthMap],
    slices: SliceRegistry,
    clock: FrameClock,
    policy: MergePolicy = MergePolicy(),
    frame_index: int | None = None,
) -> tuple[MergeResult, int]:
    """Run one merge and return it with its wall-clock duration in ns (always >= 1)."""
    t0 = time.perf_counter_ns()
    res = merge_detailed(virtual_maps, slices, clock, policy, frame_index)
    return res, max(time.perf_counter_ns() - t0, 1)
