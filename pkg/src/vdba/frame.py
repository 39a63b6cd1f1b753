"""Upstream frame timing and bandwidth-map structures.

All offsets and lengths are in allocation words (4 bytes).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Iterator, NamedTuple

XGS_LINE_RATE_BPS = 9_953_280_000
FRAME_DURATION_NS = 125_000
WORD_BITS = 32
WORD_BYTES = 4
DEFAULT_GUARD_WORDS = 8

BMAP_TRACE_FIELDS = ("frame_index", "alloc_id", "onu_id", "start_word", "grant_words", "dbru_flag")


@dataclass(frozen=True, slots=True)
class FrameClock:
    line_rate_bps: int = XGS_LINE_RATE_BPS
    frame_duration_ns: int = FRAME_DURATION_NS

    def __post_init__(self) -> None:
        if self.line_rate_bps <= 0 or self.frame_duration_ns <= 0:
            raise ValueError("line rate and frame duration must be positive")

    @property
    def upstream_capacity(self) -> int:
        """Whole allocation words that fit in one frame."""
        return self.line_rate_bps * self.frame_duration_ns // (WORD_BITS * 1_000_000_000)

    @property
    def word_time_ns(self) -> float:
        return WORD_BITS * 1e9 / self.line_rate_bps

    def frame_start_ns(self, frame_index: int) -> int:
        return frame_index * self.frame_duration_ns


class Grant(NamedTuple):
    alloc_id: int
    onu_id: int
    start_word: int
    grant_words: int
    dbru_requested: bool = False

    @property
    def end_word(self) -> int:
        return self.start_word + self.grant_words


@dataclass(frozen=True, slots=True)
class PhysicalBandwidthMap:
    frame_index: int
    grants: tuple[Grant, ...] = ()

    @property
    def granted_words(self) -> int:
        return sum(g.grant_words for g in self.grants)

    def burst_count(self) -> int:
        bursts = 0
        prev = None
        for g in self.grants:
            if g.onu_id != prev:
                bursts += 1
                prev = g.onu_id
        return bursts


class PriorityClass(str, Enum):
    FIXED = "fixed"
    ASSURED = "assured"
    BEST_EFFORT = "best_effort"


class VirtualRequest(NamedTuple):
    alloc_id: int
    grant_words: int
    dbru_requested: bool = False
    priority_class: PriorityClass = PriorityClass.BEST_EFFORT


@dataclass(frozen=True, slots=True)
class VirtualBandwidthMap:
    frame_index: int
    slice_id: str
    requests: tuple[VirtualRequest, ...] = ()

    @property
    def total_words(self) -> int:
        return sum(r.grant_words for r in self.requests)


class ViolationKind(str, Enum):
    UNSORTED = "unsorted"
    OVERLAP = "overlap"
    MISSING_GUARD = "missing_guard"
    CAPACITY = "capacity"
    EMPTY_GRANT = "empty_grant"


@dataclass(frozen=True, slots=True)
class Violation:
    kind: ViolationKind
    indices: tuple[int, ...]
    detail: str = ""


@dataclass(slots=True)
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self) -> Iterator[Violation]:
        return iter(self.violations)

    def kinds(self) -> list[ViolationKind]:
        return [v.kind for v in self.violations]


def validate_physical_map(
    bmap: PhysicalBandwidthMap, clock: FrameClock, guard_words: int = DEFAULT_GUARD_WORDS
) -> ValidationReport:
    """Collect every physical-realizability violation in ``bmap``.

    Overlap and guard checks run over the grants in start order, so an
    unsorted map still gets its geometric problems reported alongside the
    ordering ones. Indices refer to positions in ``bmap.grants``.
    Violations are returned, never raised.
    """
    capacity = clock.upstream_capacity
    out: list[Violation] = []
    grants = bmap.grants
    for i, g in enumerate(grants):
        if g.grant_words < 1:
            out.append(Violation(ViolationKind.EMPTY_GRANT, (i,), f"grant_words={g.grant_words}"))
        if g.start_word < 0 or g.end_word > capacity:
            out.append(
                Violation(ViolationKind.CAPACITY, (i,), f"[{g.start_word},{g.end_word}) outside [0,{capacity})")
            )
        if i and g.start_word < grants[i - 1].start_word:
            out.append(Violation(ViolationKind.UNSORTED, (i - 1, i)))

    # empty grants occupy no words; they are reported above and skipped here
    order = sorted((k for k in range(len(grants)) if grants[k].grant_words > 0), key=lambda k: grants[k].start_word)
    last = None  # index of the grant reaching furthest so far
    for i in order:
        g = grants[i]
        if last is not None:
            p = grants[last]
            gap = g.start_word - p.end_word
            pair = (min(last, i), max(last, i))
            if gap < 0:
                out.append(Violation(ViolationKind.OVERLAP, pair, f"overlap of {-gap} words"))
            elif p.onu_id != g.onu_id and gap < guard_words:
                out.append(Violation(ViolationKind.MISSING_GUARD, pair, f"gap {gap} < guard {guard_words}"))
        if last is None or g.end_word > grants[last].end_word:
            last = i
    used = bmap.granted_words + max(bmap.burst_count() - 1, 0) * guard_words
    if used > capacity:
        out.append(
            Violation(ViolationKind.CAPACITY, tuple(range(len(grants))), f"{used} words incl. guards > {capacity}")
        )
    return ValidationReport(out)


def usable_capacity(clock: FrameClock, onu_burst_count: int, guard_words: int = DEFAULT_GUARD_WORDS) -> int:
    if onu_burst_count < 0:
        raise ValueError("onu_burst_count must be >= 0")
    return clock.upstream_capacity - max(onu_burst_count - 1, 0) * guard_words


def bytes_to_words(n_bytes: int) -> int:
    return -(-n_bytes // WORD_BYTES)


# -- trace I/O ---------------------------------------------------------------


def bmap_rows(bmap: PhysicalBandwidthMap) -> Iterator[tuple[int, ...]]:
    for g in bmap.grants:
        yield (bmap.frame_index, g.alloc_id, g.onu_id, g.start_word, g.grant_words, int(g.dbru_requested))


def write_bmap_trace(fh: IO[str], maps: Iterable[PhysicalBandwidthMap], header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(BMAP_TRACE_FIELDS)
    for bmap in maps:
        w.writerows(bmap_rows(bmap))


def read_bmap_trace(fh: IO[str]) -> list[PhysicalBandwidthMap]:
    """Parse a trace back into maps. Frames with no grants are not represented."""
    frames: dict[int, list[Grant]] = {}
    for row in csv.reader(fh):
        if not row or row[0] == "frame_index":
            continue
        f, alloc, onu, start, words, flag = (int(x) for x in row)
        frames.setdefault(f, []).append(Grant(alloc, onu, start, words, bool(flag)))
    return [PhysicalBandwidthMap(f, tuple(gs)) for f, gs in sorted(frames.items())]
