import io

import pytest
from hypothesis import given, strategies as st

from conftest import be
from vdba.dbru import (
    DbruReport,
    DemandState,
    UnknownAllocId,
    demand_snapshot,
    ingest,
    ingest_all,
    read_dbru_trace,
    write_dbru_trace,
)
from vdba.engine import SliceDescriptor


def test_first_report_recorded():
    st_ = ingest(DbruReport(5, 1, 17, 1500), DemandState({17: 1}))
    assert st_[17] == (1500, 5)


def test_older_report_ignored():
    s = DemandState({17: 1})
    ingest(DbruReport(5, 1, 17, 1500), s)
    ingest(DbruReport(4, 1, 17, 9), s)
    assert s[17] == (1500, 5)


def test_unknown_and_foreign_alloc():
    s = DemandState({17: 1})
    with pytest.raises(UnknownAllocId):
        ingest(DbruReport(0, 1, 18, 0), s)
    with pytest.raises(UnknownAllocId):
        ingest(DbruReport(0, 2, 17, 0), s)
    with pytest.raises(ValueError):
        ingest(DbruReport(0, 1, 17, -1), s)


def test_32_onus_one_frame():
    s = DemandState({o: o for o in range(32)})
    ingest_all((DbruReport(0, o, o, 100) for o in range(32)), s)
    assert len(s) == 32


def test_snapshot_missing_reads_zero_stale():
    sl = SliceDescriptor("s", 100, (be(3, 0), be(9, 1)))
    s = DemandState({3: 0, 9: 1})
    ingest(DbruReport(2, 0, 3, 800), s)
    snap = demand_snapshot(s, sl, 3)
    assert [(d.alloc_id, d.occupancy_bytes, d.fresh) for d in snap] == [(3, 800, True), (9, 0, False)]


def test_snapshot_empty_slice():
    assert demand_snapshot(DemandState({}), SliceDescriptor("e", 0), 0) == []


def test_staleness_threshold():
    sl = SliceDescriptor("s", 100, (be(3, 0),))
    s = DemandState({3: 0}, staleness_frames=4)
    ingest(DbruReport(10, 0, 3, 1), s)
    assert demand_snapshot(s, sl, 14)[0].fresh
    assert not demand_snapshot(s, sl, 15)[0].fresh
    assert s.is_stale(3, 15)


reports_st = st.lists(
    st.tuples(st.integers(0, 3), st.integers(0, 50), st.integers(0, 10_000)),
    max_size=30,
    unique_by=lambda t: (t[0], t[1]),  # distinct frame per alloc
)


@given(reports_st, st.randoms())
def test_ingest_order_insensitive(raw, rnd):
    reports = [DbruReport(f, a, a, occ) for a, f, occ in raw]
    shuffled = reports[:]
    rnd.shuffle(shuffled)
    a = ingest_all(reports, DemandState({i: i for i in range(4)}))
    b = ingest_all(shuffled, DemandState({i: i for i in range(4)}))
    assert a.latest == b.latest


@given(st.lists(st.integers(0, 20), max_size=10, unique=True), st.integers(0, 100))
def test_snapshot_only_own_allocs(own, now):
    sl = SliceDescriptor("s", 0, tuple(be(a, a) for a in own))
    reg = {a: a for a in range(40)}
    s = ingest_all((DbruReport(0, a, a, 4 * a) for a in range(40)), DemandState(reg))
    assert [d.alloc_id for d in demand_snapshot(s, sl, now)] == sorted(own)


def test_trace_round_trip():
    reps = [DbruReport(0, 1, 2, 3), DbruReport(1, 4, 5, 6)]
    buf = io.StringIO()
    write_dbru_trace(buf, reps)
    buf.seek(0)
    assert list(read_dbru_trace(buf)) == reps
    with pytest.raises(ValueError):
        list(read_dbru_trace(io.StringIO("1,2,3\n")))
