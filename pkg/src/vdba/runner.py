"""Frame loop wiring emulator, ingestion, vDBA instances, merger and metrics.

Per frame ``f``::

    ONU arrivals -> DBRUs emitted (held one frame) -> ingest DBRUs of f-1
    -> snapshot -> vDBA cycles -> merge -> validate -> apply grants -> metrics

so reports emitted in frame ``f`` shape the map for frame ``f + 1``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from vdba.dbru import DbruReport, DemandState, demand_snapshot, ingest, write_dbru_trace
from vdba.engine import AlgorithmRegistry, default_registry, fixed_only_map, run_dba_cycle
from vdba.frame import BMAP_TRACE_FIELDS, WORD_BYTES, PhysicalBandwidthMap, bmap_rows, validate_physical_map
from vdba.merge import merge_latency_probe
from vdba.metrics import (
    TESTBED_VARIANCE_US2,
    IntervalSeries,
    IntervalStats,
    SliceStats,
    TimingSource,
    interval_histogram,
    interval_stats,
    jains_fairness,
    write_histogram,
    write_intervals,
    write_summary,
)
from vdba.onu import advance_frame, apply_grants
from vdba.scenario import Scenario

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INVARIANT = 2

DEEP_CHECK_EVERY = 64  # frames between full packet-list conservation checks

BMAP_TRACE = "bmap_trace.csv"
DBRU_TRACE = "dbru_trace.csv"
MERGE_EVENTS = "merge_events.csv"
INTERVALS = "intervals.csv"
HISTOGRAM = "interval_histogram.csv"
SUMMARY = "summary.csv"
REPORT = "report.json"


class RuntimeInvariantViolation(RuntimeError):
    def __init__(self, frame_index: int, invariant: str):
        self.frame_index = frame_index
        self.invariant = invariant
        super().__init__(f"frame {frame_index}: {invariant}")


@dataclass
class RunReport:
    out_dir: Path
    frames: int
    timing_mode: str
    files: dict[str, Path] = field(default_factory=dict)
    checksums: dict[str, str] = field(default_factory=dict)
    slice_stats: dict[str, SliceStats] = field(default_factory=dict)
    interval: IntervalStats | None = None
    merge_ns: list[int] = field(default_factory=list)
    maps_late: int = 0
    validator_violations: int = 0
    max_frame_granted_words: int = 0
    onu_fairness: float | None = None
    exit_status: int = EXIT_OK

    @property
    def mean_merge_us(self) -> float:
        return sum(self.merge_ns) / len(self.merge_ns) / 1e3 if self.merge_ns else 0.0

    def to_dict(self) -> dict:
        iv = self.interval
        return {
            "frames": self.frames,
            "timing_mode": self.timing_mode,
            "exit_status": self.exit_status,
            "validator_violations": self.validator_violations,
            "maps_late": self.maps_late,
            "mean_merge_us": round(self.mean_merge_us, 3),
            "max_frame_granted_words": self.max_frame_granted_words,
            "onu_fairness": self.onu_fairness,
            "interval": None if iv is None else vars(iv) | {"testbed_variance_us2": TESTBED_VARIANCE_US2},
            "files": {k: str(v) for k, v in self.files.items()},
            "checksums": self.checksums,
        }


class _AtomicFiles:
    """Output files written under temporary names and renamed on commit."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.handles: dict[str, IO[str]] = {}

    def open(self, name: str) -> IO[str]:
        fh = open(self.out_dir / f".{name}.tmp", "w", newline="")
        self.handles[name] = fh
        return fh

    def commit(self) -> dict[str, Path]:
        paths = {}
        for name, fh in self.handles.items():
            fh.close()
            final = self.out_dir / name
            os.replace(self.out_dir / f".{name}.tmp", final)
            paths[name] = final
        self.handles.clear()
        return paths

    def abort(self) -> None:
        for name, fh in self.handles.items():
            fh.close()
            (self.out_dir / f".{name}.tmp").unlink(missing_ok=True)
        self.handles.clear()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(
    scenario: Scenario,
    out_dir: str | os.PathLike | None = None,
    dbru_replay: Iterable[DbruReport] | None = None,
    algorithms: AlgorithmRegistry | None = None,
) -> RunReport:
    """Run ``scenario.frames`` frames and write traces and reports atomically.

    With ``dbru_replay`` the emulator is bypassed: reports come from the
    trace (keyed by their frame_index) and no grants are applied.
    """
    out = scenario.resolved_output_dir(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = _AtomicFiles(out)
    report = RunReport(out, scenario.frames, scenario.timing_mode)
    try:
        _run_frames(scenario, files, report, dbru_replay, algorithms or default_registry())
    except BaseException:
        files.abort()
        raise
    report.files = files.commit()
    deterministic = [BMAP_TRACE, DBRU_TRACE, SUMMARY]
    if scenario.timing_mode == "simulated":
        deterministic += [INTERVALS, HISTOGRAM]
    report.checksums = {n: _sha256(report.files[n]) for n in deterministic if n in report.files}
    rpath = out / REPORT
    tmp = out / f".{REPORT}.tmp"
    tmp.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    os.replace(tmp, rpath)
    report.files[REPORT] = rpath
    return report


def _run_frames(scenario, files, report, replay, algorithms) -> None:
    clock = scenario.clock
    policy = scenario.merge_policy
    registry = scenario.registry()
    slices = [registry[s] for s in registry]
    wall = scenario.timing_mode == "wall_clock"
    deadline_ns = scenario.vdba_deadline_us * 1e3 if (wall and scenario.vdba_deadline_us) else None
    checks = scenario.check_invariants

    onus = [] if replay is not None else scenario.build_onus()
    replay_by_frame: dict[int, list[DbruReport]] = defaultdict(list)
    if replay is not None:
        for r in replay:
            replay_by_frame[r.frame_index].append(r)

    state = DemandState(dict(registry.alloc_onu), scenario.staleness_frames)
    stats = {s.slice_id: SliceStats(s.slice_id) for s in slices}
    report.slice_stats = stats
    onu_tx: dict[int, int] = defaultdict(int)

    bmap_fh = files.open(BMAP_TRACE)
    bmap_fh.write(",".join(BMAP_TRACE_FIELDS) + "\n")
    dbru_fh = files.open(DBRU_TRACE) if scenario.export_dbru_trace else None
    if dbru_fh is not None:
        write_dbru_trace(dbru_fh, ())
    events_fh = files.open(MERGE_EVENTS)
    events_fh.write("frame_index,n_maps_received,n_maps_late,merge_duration_ns\n")

    pool = ThreadPoolExecutor(max_workers=min(8, os.cpu_count() or 1)) if scenario.concurrent else None
    pmap = pool.map if pool is not None else map
    stamps: list[int] = []
    pending: list[DbruReport] = []

    def vdba(args):
        s, demand, f = args
        t0 = time.perf_counter_ns()
        vmap = run_dba_cycle(s, demand, f, algorithms)
        late = deadline_ns is not None and time.perf_counter_ns() - t0 > deadline_ns
        return (fixed_only_map(s, f) if late else vmap), late

    try:
        for f in range(scenario.frames):
            if replay is None:
                emitted = [r for _, reps in pmap(lambda o: advance_frame(o, f), onus) for r in reps]
            else:
                emitted = replay_by_frame.pop(f, [])
            if dbru_fh is not None:
                write_dbru_trace(dbru_fh, emitted, header=False)

            for r in pending:
                ingest(r, state)
            pending = emitted

            jobs = [(s, demand_snapshot(state, s, f), f) for s in slices]
            outcomes = list(pmap(vdba, jobs))
            vmaps = [m for m, _ in outcomes]
            late = sum(1 for _, x in outcomes if x)
            if late:
                log.warning("frame %d: %d vDBA map(s) late, fixed grants only", f, late)
            report.maps_late += late

            res, dur = merge_latency_probe(vmaps, registry, clock, policy, frame_index=f)
            bmap = res.bmap
            stamps.append(time.perf_counter_ns() if wall else clock.frame_start_ns(f))
            report.merge_ns.append(dur)
            events_fh.write(f"{f},{len(vmaps)},{late},{dur}\n")

            violations = validate_physical_map(bmap, clock, policy.guard_words)
            if violations:
                report.validator_violations += len(violations)
                raise RuntimeInvariantViolation(f, f"physical map invalid: {violations.violations[0]}")
            for row in bmap_rows(bmap):
                bmap_fh.write(",".join(map(str, row)) + "\n")
            report.max_frame_granted_words = max(report.max_frame_granted_words, bmap.granted_words)

            for sid, words in res.granted.items():
                stats[sid].granted_words.append(words)
            for s in slices:
                if s.slice_id not in res.granted:
                    stats[s.slice_id].granted_words.append(0)

            if replay is None:
                by_onu: dict[int, list] = defaultdict(list)
                for g in bmap.grants:
                    by_onu[g.onu_id].append(g)
                deep = f % DEEP_CHECK_EVERY == 0 or f == scenario.frames - 1
                sent: dict[str, int] = defaultdict(int)
                for onu in onus:
                    mine = by_onu.get(onu.onu_id)
                    if mine:
                        _, records = apply_grants(onu, PhysicalBandwidthMap(f, tuple(mine)))
                        for rec in records:
                            stats[registry.alloc_slice[rec.alloc_id]].latency_frames[rec.latency_frames] += 1
                        for g in mine:
                            q = onu.queues.get(g.alloc_id)
                            if q is not None:
                                # dequeued is cumulative; fold in only this frame's delta
                                sent[registry.alloc_slice[q.alloc_id]] += q.dequeued - onu_tx.get(q.alloc_id, 0)
                                onu_tx[q.alloc_id] = q.dequeued
                    if checks and not onu.conserved(deep):
                        raise RuntimeInvariantViolation(f, f"byte conservation broken at ONU {onu.onu_id}")
                for sid, nbytes in sent.items():
                    stats[sid].transmitted_bytes += nbytes
                    if checks and nbytes > res.granted.get(sid, 0) * WORD_BYTES:
                        raise RuntimeInvariantViolation(f, f"slice {sid} sent {nbytes} bytes beyond its grants")
    finally:
        if pool is not None:
            pool.shutdown()

    for o in onus:
        for q in o.queues.values():
            stats[registry.alloc_slice[q.alloc_id]].offered_bytes += q.enqueued + q.dropped

    per_onu = defaultdict(int)
    for o in onus:
        per_onu[o.onu_id] = sum(q.dequeued for q in o.queues.values())
    if per_onu and any(per_onu.values()):
        report.onu_fairness = jains_fairness([per_onu[k] for k in sorted(per_onu)])

    series = IntervalSeries.from_timestamps(stamps, TimingSource.WALL_CLOCK if wall else TimingSource.SIMULATED)
    write_intervals(files.open(INTERVALS), series)
    write_histogram(files.open(HISTOGRAM), interval_histogram(series, scenario.histogram_bin_us))
    if len(series.samples) >= 2:
        report.interval = interval_stats(series)
    write_summary(files.open(SUMMARY), stats)
