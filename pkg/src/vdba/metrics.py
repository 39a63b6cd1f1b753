"""Run statistics: map-interval stability, throughput, latency, fairness, isolation."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Mapping, Sequence

import numpy as np

# Wall-clock inter-map variance reported by the hardware testbed, taken as us^2.
TESTBED_VARIANCE_US2 = 0.75


class InsufficientSamples(ValueError):
    pass


class AllZero(ValueError):
    pass


class ConfigMismatch(ValueError):
    pass


class TimingSource(str, Enum):
    SIMULATED = "simulated_time"
    WALL_CLOCK = "wall_clock"


@dataclass
class IntervalSeries:
    samples: list[int] = field(default_factory=list)  # ns
    source: TimingSource = TimingSource.SIMULATED

    def __post_init__(self) -> None:
        self.source = TimingSource(self.source)
        if any(s < 0 for s in self.samples):
            raise ValueError("interval samples must be >= 0")

    @classmethod
    def from_timestamps(cls, stamps_ns: Sequence[int], source=TimingSource.SIMULATED) -> IntervalSeries:
        return cls([b - a for a, b in zip(stamps_ns, stamps_ns[1:])], source)


@dataclass(frozen=True)
class IntervalStats:
    n: int
    mean_us: float
    variance_us2: float
    min_us: float
    max_us: float
    p99_us: float


def interval_stats(series: IntervalSeries) -> IntervalStats:
    """Population statistics of an interval series, converted from ns to us."""
    if len(series.samples) < 2:
        raise InsufficientSamples(f"need >= 2 samples, got {len(series.samples)}")
    x = np.asarray(series.samples, dtype=np.int64)
    mean_ns = x.mean()
    var_ns2 = float(((x - mean_ns) ** 2).mean())
    return IntervalStats(
        n=len(x),
        mean_us=float(mean_ns) / 1e3,
        variance_us2=var_ns2 / 1e6,
        min_us=int(x.min()) / 1e3,
        max_us=int(x.max()) / 1e3,
        p99_us=float(np.percentile(x, 99)) / 1e3,
    )


def interval_histogram(series: IntervalSeries, bin_us: float = 1.0) -> list[tuple[float, int]]:
    """Counts per ``bin_us``-wide bin, only non-empty bins, ascending."""
    if bin_us <= 0:
        raise ValueError("bin_us must be positive")
    bin_ns = bin_us * 1e3
    counts = Counter(math.floor(s / bin_ns) for s in series.samples)
    return [(round(k * bin_us, 6), counts[k]) for k in sorted(counts)]


def jains_fairness(values: Sequence[float]) -> float:
    if not values:
        raise ValueError("need at least one entity")
    if any(v < 0 for v in values):
        raise ValueError("throughputs must be non-negative")
    top = max(values)
    if top == 0:
        raise AllZero("all throughputs are zero")
    x = [v / top for v in values]  # scale-free; avoids under/overflow in the squares
    return sum(x) ** 2 / (len(x) * sum(v * v for v in x))


@dataclass
class SliceStats:
    slice_id: str
    granted_words: list[int] = field(default_factory=list)  # one entry per frame
    transmitted_bytes: int = 0
    offered_bytes: int = 0
    latency_frames: Counter = field(default_factory=Counter)  # latency -> packet count

    @property
    def frames(self) -> int:
        return len(self.granted_words)

    @property
    def granted_total(self) -> int:
        return sum(self.granted_words)

    @property
    def packets(self) -> int:
        return sum(self.latency_frames.values())

    def mean_latency(self) -> float:
        n = self.packets
        return sum(k * c for k, c in self.latency_frames.items()) / n if n else math.nan

    def latency_quantile(self, q: float) -> float:
        """Nearest-rank quantile of the latency samples, in frames."""
        n = self.packets
        if not n:
            return math.nan
        rank = max(math.ceil(q * n), 1)
        seen = 0
        for k in sorted(self.latency_frames):
            seen += self.latency_frames[k]
            if seen >= rank:
                return float(k)
        return float(max(self.latency_frames))


def isolation_delta(
    baseline: Mapping[str, SliceStats], perturbed: Mapping[str, SliceStats], victim: str
) -> float:
    """Relative change of the victim slice's total granted words between two runs."""
    if set(baseline) != set(perturbed) or victim not in baseline:
        raise ConfigMismatch("runs do not carry the same slices")
    b, p = baseline[victim], perturbed[victim]
    if b.frames != p.frames:
        raise ConfigMismatch(f"frame counts differ: {b.frames} vs {p.frames}")
    base, pert = b.granted_total, p.granted_total
    if base == 0:
        return 0.0 if pert == 0 else math.inf
    return abs(pert - base) / base


# -- CSV output --------------------------------------------------------------

SUMMARY_FIELDS = (
    "slice_id",
    "frames",
    "granted_words_total",
    "granted_words_mean",
    "transmitted_bytes",
    "offered_bytes",
    "packets",
    "latency_mean_frames",
    "latency_p99_frames",
)


def write_summary(fh: IO[str], stats: Mapping[str, SliceStats]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for sid in sorted(stats):
        s = stats[sid]
        w.writerow(
            (
                sid,
                s.frames,
                s.granted_total,
                f"{s.granted_total / s.frames:.3f}" if s.frames else "nan",
                s.transmitted_bytes,
                s.offered_bytes,
                s.packets,
                f"{s.mean_latency():.3f}",
                f"{s.latency_quantile(0.99):.0f}" if s.packets else "nan",
            )
        )


def write_intervals(fh: IO[str], series: IntervalSeries, first_frame: int = 1) -> None:
    """One row per interval, keyed by the frame whose map closes it."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("frame_index", "interval_ns"))
    for i, s in enumerate(series.samples):
        w.writerow((first_frame + i, s))


def write_histogram(fh: IO[str], hist: Sequence[tuple[float, int]]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("bin_start_us", "count"))
    w.writerows(hist)
