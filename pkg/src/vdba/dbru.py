"""Buffer-occupancy report (DBRU) ingestion and per-slice demand snapshots."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import IO, TYPE_CHECKING, Iterable, Iterator, Mapping, NamedTuple

if TYPE_CHECKING:
    from vdba.engine import SliceDescriptor

DEFAULT_STALENESS_FRAMES = 4
DBRU_TRACE_FIELDS = ("frame_index", "onu_id", "alloc_id", "occupancy_bytes")


class UnknownAllocId(KeyError):
    """A report named an AllocID that is not registered, or registered to another ONU."""


class DbruReport(NamedTuple):
    frame_index: int
    onu_id: int
    alloc_id: int
    occupancy_bytes: int


class DemandEntry(NamedTuple):
    alloc_id: int
    occupancy_bytes: int
    fresh: bool
    reported_frame: int | None = None


@dataclass
class DemandState:
    """Latest report per AllocID.

    ``registry`` maps every AllocID this state may accept to its owning ONU.
    """

    registry: Mapping[int, int]
    staleness_frames: int = DEFAULT_STALENESS_FRAMES
    latest: dict[int, tuple[int, int]] = field(default_factory=dict)  # alloc -> (occupancy, frame)

    def __post_init__(self) -> None:
        if self.staleness_frames < 0:
            raise ValueError("staleness_frames must be >= 0")

    def __len__(self) -> int:
        return len(self.latest)

    def __getitem__(self, alloc_id: int) -> tuple[int, int]:
        return self.latest[alloc_id]

    def __contains__(self, alloc_id: object) -> bool:
        return alloc_id in self.latest

    def is_stale(self, alloc_id: int, now: int) -> bool:
        entry = self.latest.get(alloc_id)
        return entry is None or now - entry[1] > self.staleness_frames


def ingest(report: DbruReport, state: DemandState) -> DemandState:
    """Record ``report`` as the latest for its AllocID unless a newer one is held.

    Updates ``state`` in place and returns it.
    """
    owner = state.registry.get(report.alloc_id)
    if owner is None:
        raise UnknownAllocId(f"alloc_id {report.alloc_id} is not registered")
    if owner != report.onu_id:
        raise UnknownAllocId(f"alloc_id {report.alloc_id} belongs to ONU {owner}, not ONU {report.onu_id}")
    if report.occupancy_bytes < 0:
        raise ValueError("occupancy_bytes must be >= 0")
    held = state.latest.get(report.alloc_id)
    if held is None or report.frame_index >= held[1]:
        state.latest[report.alloc_id] = (report.occupancy_bytes, report.frame_index)
    return state


def ingest_all(reports: Iterable[DbruReport], state: DemandState) -> DemandState:
    for r in reports:
        ingest(r, state)
    return state


def demand_snapshot(state: DemandState, slice_: SliceDescriptor, now: int) -> list[DemandEntry]:
    """Demand for exactly the slice's AllocIDs, ascending by AllocID.

    Never-reported AllocIDs read as zero occupancy, tagged stale.
    """
    out = []
    for alloc_id in sorted(slice_.alloc_id_set):
        held = state.latest.get(alloc_id)
        if held is None:
            out.append(DemandEntry(alloc_id, 0, False, None))
        else:
            occ, f = held
            out.append(DemandEntry(alloc_id, occ, now - f <= state.staleness_frames, f))
    return out


def write_dbru_trace(fh: IO[str], reports: Iterable[DbruReport], header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(DBRU_TRACE_FIELDS)
    for r in reports:
        w.writerow((r.frame_index, r.onu_id, r.alloc_id, r.occupancy_bytes))


def read_dbru_trace(fh: IO[str]) -> Iterator[DbruReport]:
    for lineno, row in enumerate(csv.reader(fh), 1):
        if not row or row[0].strip() == "frame_index":
            continue
        if len(row) != 4:
            raise ValueError(f"line {lineno}: expected 4 fields, got {len(row)}")
        f, onu, alloc, occ = (int(x) for x in row)
        yield DbruReport(f, onu, alloc, occ)
