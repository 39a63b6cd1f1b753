"""Per-slice virtual DBA instances and the algorithms they run."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cmp_to_key
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from vdba.dbru import DemandEntry
from vdba.frame import (
    DEFAULT_GUARD_WORDS,
    FrameClock,
    PriorityClass,
    VirtualBandwidthMap,
    VirtualRequest,
    bytes_to_words,
    usable_capacity,
)

FIXED_LOW_LATENCY = "fixed_low_latency"
STATUS_REPORTING = "status_reporting"


class UnknownAlgorithm(KeyError):
    pass


class DuplicateAlgorithmId(ValueError):
    pass


class RegistrationError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class TrafficClass:
    kind: PriorityClass = PriorityClass.BEST_EFFORT
    fixed_words: int = 0
    weight: float = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PriorityClass(self.kind))
        if self.fixed_words < 0:
            raise ValueError("fixed_words must be >= 0")
        if self.kind is not PriorityClass.FIXED and self.fixed_words:
            raise ValueError("fixed_words only applies to the fixed class")
        if not self.weight > 0:
            raise ValueError("weight must be positive")


@dataclass(frozen=True, slots=True)
class AllocSpec:
    alloc_id: int
    onu_id: int
    traffic: TrafficClass = TrafficClass()


@dataclass(frozen=True)
class SliceDescriptor:
    slice_id: str
    share_words: int
    allocs: tuple[AllocSpec, ...] = ()
    algorithm: str = STATUS_REPORTING
    surplus_eligible: bool = False
    priority: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "allocs", tuple(self.allocs))
        if self.share_words < 0:
            raise ValueError(f"slice {self.slice_id}: share_words must be >= 0")
        ids = [a.alloc_id for a in self.allocs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"slice {self.slice_id}: duplicate alloc_id")
        fixed = sum(a.traffic.fixed_words for a in self.allocs)
        if fixed > self.share_words:
            raise ValueError(f"slice {self.slice_id}: fixed_words total {fixed} exceeds share {self.share_words}")

    @property
    def alloc_id_set(self) -> frozenset[int]:
        return frozenset(a.alloc_id for a in self.allocs)

    def ordered_allocs(self) -> list[AllocSpec]:
        """Allocs grouped by ONU so same-ONU grants abut in one burst."""
        return sorted(self.allocs, key=lambda a: (a.onu_id, a.alloc_id))


class SliceRegistry(Mapping[str, SliceDescriptor]):
    """The set of slices sharing one PON.

    Registration enforces disjoint AllocID sets and that the guaranteed
    shares fit the frame even if every AllocID transmits as its own burst.
    """

    def __init__(
        self,
        slices: Iterable[SliceDescriptor] = (),
        clock: FrameClock | None = None,
        guard_words: int = DEFAULT_GUARD_WORDS,
    ) -> None:
        self.clock = clock or FrameClock()
        self.guard_words = guard_words
        self._slices: dict[str, SliceDescriptor] = {}
        self.alloc_slice: dict[int, str] = {}
        self.alloc_onu: dict[int, int] = {}
        for s in slices:
            self.register(s)

    def register(self, s: SliceDescriptor) -> None:
        if s.slice_id in self._slices:
            raise RegistrationError(f"slice {s.slice_id} already registered")
        clash = sorted(a for a in s.alloc_id_set if a in self.alloc_slice)
        if clash:
            raise RegistrationError(f"alloc_id {clash[0]} already owned by slice {self.alloc_slice[clash[0]]}")
        n_alloc = len(self.alloc_slice) + len(s.allocs)
        ceiling = usable_capacity(self.clock, n_alloc, self.guard_words)
        shares = sum(x.share_words for x in self._slices.values()) + s.share_words
        if shares > ceiling:
            raise RegistrationError(f"shares total {shares} words exceeds usable capacity {ceiling} at {n_alloc} bursts")
        self._slices[s.slice_id] = s
        for a in s.allocs:
            self.alloc_slice[a.alloc_id] = s.slice_id
            self.alloc_onu[a.alloc_id] = a.onu_id

    def __getitem__(self, slice_id: str) -> SliceDescriptor:
        return self._slices[slice_id]

    def __iter__(self):
        return iter(self._slices)

    def __len__(self) -> int:
        return len(self._slices)


# -- water-filling -----------------------------------------------------------


def water_fill(
    capacity: int,
    demands: Sequence[int],
    weights: Sequence[float | int | Fraction] | None = None,
    rotation: int = 0,
) -> list[int]:
    """Weighted max-min fair split of ``capacity`` whole words.

    Each entity gets ``min(demand, floor(weight * level))`` where ``level``
    is the exact fill level; the few words left by flooring go one each
    to unsatisfied entities in index order starting at ``rotation % n``.
    """
    n = len(demands)
    if n == 0 or capacity <= 0:
        return [0] * n
    if sum(demands) <= capacity:
        return list(demands)
    if weights is None:
        w = [1] * n
    elif all(float(x).is_integer() for x in weights):
        w = [int(x) for x in weights]
    else:
        fw = [Fraction(x) for x in weights]
        scale = math.lcm(*(x.denominator for x in fw))
        w = [int(x * scale) for x in fw]
    if any(x <= 0 for x in w):
        raise ValueError("weights must be positive")

    # ascending demand/weight, compared exactly by cross-multiplication
    order = sorted(range(n), key=cmp_to_key(lambda i, j: demands[i] * w[j] - demands[j] * w[i]))
    alloc = [0] * n
    rem = capacity
    wsum = sum(w)
    k = 0
    # saturate entities whose demand sits below the current fill level
    while k < n:
        i = order[k]
        if demands[i] * wsum <= w[i] * rem:
            alloc[i] = demands[i]
            rem -= demands[i]
            wsum -= w[i]
            k += 1
        else:
            break
    for i in order[k:]:
        alloc[i] = w[i] * rem // wsum
    leftover = capacity - sum(alloc)
    start = rotation % n
    for j in range(n):
        if leftover == 0:
            break
        i = (start + j) % n
        if alloc[i] < demands[i]:
            alloc[i] += 1
            leftover -= 1
    return alloc


# -- algorithms --------------------------------------------------------------


class DbaAlgorithm(Protocol):
    def __call__(
        self, slice_: SliceDescriptor, demand: Sequence[DemandEntry], frame_index: int
    ) -> VirtualBandwidthMap: ...


class FixedLowLatency:
    """Pre-allocated grants every frame; reports are ignored."""

    def __call__(self, slice_, demand, frame_index):
        reqs = tuple(
            VirtualRequest(a.alloc_id, a.traffic.fixed_words, False, PriorityClass.FIXED)
            for a in slice_.ordered_allocs()
            if a.traffic.kind is PriorityClass.FIXED and a.traffic.fixed_words > 0
        )
        return VirtualBandwidthMap(frame_index, slice_.slice_id, reqs)


class StatusReporting:
    """Report-driven allocation inside the slice share.

    Fixed allocs get their fixed words, assured allocs are filled up to
    their reported demand, and best-effort allocs split what remains by
    weight. Surplus-eligible slices also append their unmet demand after
    the in-share requests so the merger can top them up from spare words.
    """

    def __call__(self, slice_, demand, frame_index):
        need = {d.alloc_id: bytes_to_words(d.occupancy_bytes) for d in demand}
        allocs = sorted(slice_.allocs, key=lambda a: a.alloc_id)
        granted = dict.fromkeys(need, 0)
        remaining = slice_.share_words

        for a in allocs:
            if a.traffic.kind is PriorityClass.FIXED:
                granted[a.alloc_id] = a.traffic.fixed_words
                remaining -= a.traffic.fixed_words

        for kind in (PriorityClass.ASSURED, PriorityClass.BEST_EFFORT):
            members = [a for a in allocs if a.traffic.kind is kind]
            if not members:
                continue
            weights = [a.traffic.weight if kind is PriorityClass.BEST_EFFORT else 1 for a in members]
            split = water_fill(remaining, [need[a.alloc_id] for a in members], weights, frame_index)
            for a, x in zip(members, split):
                granted[a.alloc_id] = x
            remaining -= sum(split)

        ordered = slice_.ordered_allocs()
        reqs = [
            VirtualRequest(a.alloc_id, granted[a.alloc_id], a.traffic.kind is not PriorityClass.FIXED, a.traffic.kind)
            for a in ordered
            if granted[a.alloc_id] > 0
        ]
        if slice_.surplus_eligible:
            for a in ordered:
                unmet = need[a.alloc_id] - granted[a.alloc_id]
                if a.traffic.kind is not PriorityClass.FIXED and unmet > 0:
                    reqs.append(VirtualRequest(a.alloc_id, unmet, True, a.traffic.kind))
        return VirtualBandwidthMap(frame_index, slice_.slice_id, tuple(reqs))


@dataclass
class AlgorithmRegistry:
    algorithms: dict[str, Callable] = field(default_factory=dict)

    def register(self, algorithm_id: str, algorithm: DbaAlgorithm) -> AlgorithmRegistry:
        if algorithm_id in self.algorithms:
            raise DuplicateAlgorithmId(algorithm_id)
        self.algorithms[algorithm_id] = algorithm
        return self

    def get(self, algorithm_id: str) -> DbaAlgorithm:
        try:
            return self.algorithms[algorithm_id]
        except KeyError:
            raise UnknownAlgorithm(algorithm_id) from None

    def __contains__(self, algorithm_id: object) -> bool:
        return algorithm_id in self.algorithms


def default_registry() -> AlgorithmRegistry:
    reg = AlgorithmRegistry()
    reg.register(FIXED_LOW_LATENCY, FixedLowLatency())
    reg.register(STATUS_REPORTING, StatusReporting())
    return reg


_DEFAULT = default_registry()


def register_algorithm(algorithm_id: str, algorithm: DbaAlgorithm, registry: AlgorithmRegistry | None = None):
    return (registry or _DEFAULT).register(algorithm_id, algorithm)


def run_dba_cycle(
    slice_: SliceDescriptor,
    demand: Sequence[DemandEntry],
    frame_index: int,
    registry: AlgorithmRegistry | None = None,
) -> VirtualBandwidthMap:
    algo = (registry or _DEFAULT).get(slice_.algorithm)
    got = sorted(d.alloc_id for d in demand)
    if got != sorted(slice_.alloc_id_set):
        raise ValueError(f"demand for slice {slice_.slice_id} does not cover exactly its AllocIDs")
    return algo(slice_, demand, frame_index)


def fixed_only_map(slice_: SliceDescriptor, frame_index: int) -> VirtualBandwidthMap:
    """Stand-in used when a slice's vDBA instance misses the frame deadline."""
    return FixedLowLatency()(slice_, (), frame_index)
