"""Scenario files: YAML, schema version 1 (see docs/scenario-schema.md)."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from vdba.dbru import DEFAULT_STALENESS_FRAMES
from vdba.engine import (
    AllocSpec,
    RegistrationError,
    SliceDescriptor,
    SliceRegistry,
    TrafficClass,
    default_registry,
)
from vdba.frame import FrameClock, PriorityClass
from vdba.merge import MergePolicy, OverrunPolicy, SurplusPolicy
from vdba.onu import OnuState, TrafficProfile, profile_from_dict

SCHEMA_VERSION = 1
OUT_DIR_ENV = "VDBA_OUT_DIR"
TIMING_MODES = ("simulated", "wall_clock")


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class OnuSpec:
    onu_id: int
    profiles: dict[int, TrafficProfile]
    buffer_bytes: int | None = None


@dataclass
class Scenario:
    slices: tuple[SliceDescriptor, ...]
    onus: tuple[OnuSpec, ...]
    frames: int = 1000
    seed: int = 0
    clock: FrameClock = field(default_factory=FrameClock)
    merge_policy: MergePolicy = field(default_factory=MergePolicy)
    staleness_frames: int = DEFAULT_STALENESS_FRAMES
    timing_mode: str = "simulated"
    concurrent: bool = False
    output_dir: str = "out"
    vdba_deadline_us: float | None = None
    histogram_bin_us: float = 1.0
    export_dbru_trace: bool = True
    check_invariants: bool = True

    def registry(self) -> SliceRegistry:
        return SliceRegistry(self.slices, self.clock, self.merge_policy.guard_words)

    def onu_seed(self, onu_id: int) -> int:
        # independent, order-free stream per ONU
        return int(np.random.SeedSequence([self.seed, onu_id]).generate_state(1)[0])

    def build_onus(self) -> list[OnuState]:
        return [
            OnuState.build(
                o.onu_id,
                o.profiles,
                self.onu_seed(o.onu_id),
                buffer_bytes=o.buffer_bytes,
                frame_duration_ns=self.clock.frame_duration_ns,
            )
            for o in self.onus
        ]

    def resolved_output_dir(self, override: str | os.PathLike | None = None) -> Path:
        if override is not None:
            return Path(override)
        return Path(os.environ.get(OUT_DIR_ENV) or self.output_dir)


class _Checker:
    def __init__(self) -> None:
        self.errors: list[str] = []

    def get(self, d: dict, key: str, path: str, typ, default=..., check=None, why: str = ""):
        if key not in d:
            if default is ...:
                self.errors.append(f"{path}.{key}: required")
                return None
            return default
        v = d[key]
        if v is None and default is None:
            return None
        if typ is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if not isinstance(v, typ) or (typ is int and isinstance(v, bool)):
            self.errors.append(f"{path}.{key}: expected {getattr(typ, '__name__', typ)}, got {v!r}")
            return None
        if check is not None and not check(v):
            self.errors.append(f"{path}.{key}: {why or 'invalid value'} ({v!r})")
            return None
        return v


def _nonneg(v) -> bool:
    return v >= 0


def _pos(v) -> bool:
    return v > 0


def scenario_from_dict(raw: Any) -> Scenario:
    """Validate a parsed scenario document, reporting every problem at once."""
    if not isinstance(raw, dict):
        raise ValidationError(["<root>: expected a mapping"])
    c = _Checker()
    ver = c.get(raw, "schema_version", "<root>", int, SCHEMA_VERSION)
    if ver is not None and ver != SCHEMA_VERSION:
        c.errors.append(f"<root>.schema_version: unsupported version {ver}")

    frames = c.get(raw, "frames", "<root>", int, 1000, _nonneg, "must be >= 0")
    seed = c.get(raw, "seed", "<root>", int, 0, _nonneg, "must be >= 0")
    timing = c.get(raw, "timing_mode", "<root>", str, "simulated", lambda v: v in TIMING_MODES, "unknown mode")
    concurrent = c.get(raw, "concurrent", "<root>", bool, False)
    out_dir = c.get(raw, "output_dir", "<root>", str, "out")
    deadline = c.get(raw, "vdba_deadline_us", "<root>", float, None, _pos, "must be > 0")
    bin_us = c.get(raw, "histogram_bin_us", "<root>", float, 1.0, _pos, "must be > 0")
    export_dbru = c.get(raw, "export_dbru_trace", "<root>", bool, True)
    check_inv = c.get(raw, "check_invariants", "<root>", bool, True)

    clock_raw = c.get(raw, "clock", "<root>", dict, {})
    clock = FrameClock()
    if clock_raw is not None:
        rate = c.get(clock_raw, "line_rate_bps", "clock", int, clock.line_rate_bps, _pos, "must be > 0")
        dur = c.get(clock_raw, "frame_duration_ns", "clock", int, clock.frame_duration_ns, _pos, "must be > 0")
        if rate and dur:
            clock = FrameClock(rate, dur)

    merge_raw = c.get(raw, "merge", "<root>", dict, {})
    policy = MergePolicy()
    if merge_raw is not None:
        gw = c.get(merge_raw, "guard_words", "merge", int, policy.guard_words, _nonneg, "must be >= 0")
        sp = c.get(merge_raw, "surplus_distribution", "merge", str, policy.surplus_distribution.value,
                   lambda v: v in {p.value for p in SurplusPolicy}, "unknown policy")
        op = c.get(merge_raw, "overrun_handling", "merge", str, policy.overrun_handling.value,
                   lambda v: v in {p.value for p in OverrunPolicy}, "unknown policy")
        if None not in (gw, sp, op):
            policy = MergePolicy(gw, SurplusPolicy(sp), OverrunPolicy(op))

    dbru_raw = c.get(raw, "dbru", "<root>", dict, {})
    staleness = DEFAULT_STALENESS_FRAMES
    if dbru_raw is not None:
        staleness = c.get(dbru_raw, "staleness_frames", "dbru", int, staleness, _nonneg, "must be >= 0")

    slices: list[SliceDescriptor] = []
    alloc_owner: dict[int, str] = {}
    alloc_onu_in_slice: dict[int, int] = {}
    for i, s in enumerate(c.get(raw, "slices", "<root>", list) or []):
        path = f"slices[{i}]"
        if not isinstance(s, dict):
            c.errors.append(f"{path}: expected a mapping")
            continue
        sid = c.get(s, "id", path, str)
        share = c.get(s, "share_words", path, int, check=_nonneg, why="must be >= 0")
        algo = c.get(s, "algorithm", path, str, "status_reporting")
        eligible = c.get(s, "surplus_eligible", path, bool, False)
        prio = c.get(s, "priority", path, int, 0)
        if sid is not None and any(x.slice_id == sid for x in slices):
            c.errors.append(f"{path}.id: duplicate slice id {sid!r}")
        allocs = []
        for j, a in enumerate(c.get(s, "allocs", path, list, []) or []):
            apath = f"{path}.allocs[{j}]"
            if not isinstance(a, dict):
                c.errors.append(f"{apath}: expected a mapping")
                continue
            aid = c.get(a, "alloc_id", apath, int, check=_nonneg, why="must be >= 0")
            onu = c.get(a, "onu_id", apath, int, check=_nonneg, why="must be >= 0")
            kind = c.get(a, "class", apath, str, "best_effort",
                         lambda v: v in {p.value for p in PriorityClass}, "unknown traffic class")
            fixed = c.get(a, "fixed_words", apath, int, 0, _nonneg, "must be >= 0")
            weight = c.get(a, "weight", apath, float, 1.0, _pos, "must be > 0")
            if None in (aid, onu, kind, fixed, weight):
                continue
            if aid in alloc_owner:
                c.errors.append(f"{apath}.alloc_id: alloc_id {aid} appears in slices {alloc_owner[aid]!r} and {sid!r}")
                continue
            alloc_owner[aid] = sid
            alloc_onu_in_slice[aid] = onu
            if share is not None and fixed > share:
                c.errors.append(f"{apath}.fixed_words: {fixed} exceeds slice share {share}")
            try:
                allocs.append(AllocSpec(aid, onu, TrafficClass(PriorityClass(kind), fixed, weight)))
            except ValueError as e:
                c.errors.append(f"{apath}: {e}")
        if None in (sid, share, algo, eligible, prio):
            continue
        try:
            slices.append(SliceDescriptor(sid, share, tuple(allocs), algo, eligible, prio))
        except ValueError as e:
            c.errors.append(f"{path}: {e}")

    onus: list[OnuSpec] = []
    hosted: dict[int, int] = {}
    for i, o in enumerate(c.get(raw, "onus", "<root>", list) or []):
        path = f"onus[{i}]"
        if not isinstance(o, dict):
            c.errors.append(f"{path}: expected a mapping")
            continue
        oid = c.get(o, "id", path, int, check=_nonneg, why="must be >= 0")
        buf = c.get(o, "buffer_bytes", path, int, None, _pos, "must be > 0")
        if oid is not None and any(x.onu_id == oid for x in onus):
            c.errors.append(f"{path}.id: duplicate ONU id {oid}")
        profiles: dict[int, TrafficProfile] = {}
        for j, a in enumerate(c.get(o, "allocs", path, list, []) or []):
            apath = f"{path}.allocs[{j}]"
            if not isinstance(a, dict):
                c.errors.append(f"{apath}: expected a mapping")
                continue
            aid = c.get(a, "alloc_id", apath, int)
            prof = c.get(a, "profile", apath, dict, {"kind": "cbr", "rate_bps": 0})
            if aid is None or prof is None:
                continue
            if aid in hosted:
                c.errors.append(f"{apath}.alloc_id: alloc_id {aid} hosted by ONUs {hosted[aid]} and {oid}")
                continue
            hosted[aid] = oid
            try:
                profiles[aid] = profile_from_dict(prof)
            except (TypeError, ValueError, KeyError) as e:
                c.errors.append(f"{apath}.profile: {e}")
            if aid not in alloc_owner:
                c.errors.append(f"{apath}.alloc_id: alloc_id {aid} is not owned by any slice")
            elif alloc_onu_in_slice[aid] != oid:
                c.errors.append(
                    f"{apath}.alloc_id: alloc_id {aid} is declared on ONU {alloc_onu_in_slice[aid]} by its slice"
                )
        if oid is not None:
            onus.append(OnuSpec(oid, profiles, buf))

    for aid in sorted(set(alloc_owner) - set(hosted)):
        c.errors.append(f"slices: alloc_id {aid} (slice {alloc_owner[aid]!r}) is not hosted by any ONU")

    known = default_registry()
    for s in slices:
        if s.algorithm not in known:
            c.errors.append(f"slices[{s.slice_id}].algorithm: unknown algorithm {s.algorithm!r}")
    if not c.errors:
        try:
            SliceRegistry(slices, clock, policy.guard_words)
        except RegistrationError as e:
            c.errors.append(f"slices: {e}")

    if c.errors:
        raise ValidationError(c.errors)
    return Scenario(
        slices=tuple(slices),
        onus=tuple(onus),
        frames=frames,
        seed=seed,
        clock=clock,
        merge_policy=policy,
        staleness_frames=staleness,
        timing_mode=timing,
        concurrent=concurrent,
        output_dir=out_dir,
        vdba_deadline_us=deadline,
        histogram_bin_us=bin_us,
        export_dbru_trace=export_dbru,
        check_invariants=check_inv,
    )


def load_scenario(path: str | os.PathLike) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(f"{path}: {e}") from e
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ParseError(f"{path}: {e}") from e
    return scenario_from_dict(raw)
