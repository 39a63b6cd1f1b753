import io

from hypothesis import given, strategies as st

from oracles import min_gap_between_onus, overlap_pairs
from vdba.frame import (
    FrameClock,
    Grant,
    PhysicalBandwidthMap,
    ViolationKind,
    bytes_to_words,
    read_bmap_trace,
    usable_capacity,
    validate_physical_map,
    write_bmap_trace,
)


def bm(*grants, f=0):
    return PhysicalBandwidthMap(f, tuple(Grant(*g) for g in grants))


def test_capacity_identity():
    # 9.95328 Gb/s * 125 us / 32 bits
    assert FrameClock().upstream_capacity == 38_880
    assert 9_953_280_000 * 125 // (32 * 1_000_000) == 38_880


def test_empty_map_valid():
    assert validate_physical_map(bm(), FrameClock()).ok


def test_same_onu_adjacent_valid():
    assert validate_physical_map(bm((1, 7, 0, 100), (2, 7, 100, 100)), FrameClock()).ok


def test_missing_guard_between_onus():
    rep = validate_physical_map(bm((1, 1, 0, 100), (2, 2, 104, 96)), FrameClock(), 8)
    assert rep.kinds() == [ViolationKind.MISSING_GUARD]
    assert min_gap_between_onus(bm((1, 1, 0, 100), (2, 2, 104, 96)).grants) == 4


def test_overlap_unsorted_empty_and_capacity():
    clock = FrameClock()
    assert ViolationKind.OVERLAP in validate_physical_map(bm((1, 1, 0, 50), (2, 1, 40, 10)), clock).kinds()
    assert ViolationKind.UNSORTED in validate_physical_map(bm((1, 1, 100, 5), (2, 1, 0, 5)), clock).kinds()
    assert ViolationKind.EMPTY_GRANT in validate_physical_map(bm((1, 1, 0, 0)), clock).kinds()
    assert ViolationKind.CAPACITY in validate_physical_map(bm((1, 1, 38_870, 20)), clock).kinds()


def test_guard_budget_counts_toward_capacity():
    clock = FrameClock(51_200_000)  # 200 words
    rep = validate_physical_map(bm((1, 1, 0, 100), (2, 2, 108, 92)), clock, 8)
    assert rep.ok
    rep = validate_physical_map(bm((1, 1, 0, 100), (2, 2, 110, 90)), clock, 8)
    assert rep.ok  # gap larger than guard is fine


def test_usable_capacity_examples():
    c = FrameClock()
    assert usable_capacity(c, 0, 8) == 38_880
    assert usable_capacity(c, 1, 8) == 38_880
    assert usable_capacity(c, 32, 8) == 38_632


@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 64), st.integers(0, 64))
def test_usable_capacity_monotone(b1, b2, g1, g2):
    c = FrameClock()
    lo_b, hi_b = sorted((b1, b2))
    lo_g, hi_g = sorted((g1, g2))
    assert usable_capacity(c, hi_b, lo_g) <= usable_capacity(c, lo_b, lo_g)
    assert usable_capacity(c, lo_b, hi_g) <= usable_capacity(c, lo_b, lo_g)


def test_bytes_to_words_ceiling():
    assert [bytes_to_words(n) for n in (0, 1, 4, 5, 1500)] == [0, 1, 1, 2, 375]


grant_st = st.tuples(st.integers(1, 5), st.integers(0, 3), st.integers(0, 220), st.integers(0, 60))


@given(st.lists(grant_st, max_size=6), st.sampled_from([0, 4, 8]))
def test_validator_agrees_with_word_oracle(raw, guard):
    clock = FrameClock(51_200_000)
    m = bm(*raw)
    rep = validate_physical_map(m, clock, guard)
    grants = m.grants
    has_overlap = bool(overlap_pairs(grants))
    assert (ViolationKind.OVERLAP in rep.kinds()) == has_overlap
    if rep.ok:
        assert not has_overlap
        gap = min_gap_between_onus(grants)
        assert gap is None or gap >= guard
        assert all(0 <= g.start_word and g.end_word <= 200 for g in grants)
        assert [g.start_word for g in grants] == sorted(g.start_word for g in grants)


def test_bmap_trace_round_trip():
    maps = [bm((1, 1, 0, 10, True), (2, 2, 18, 5), f=0), bm((1, 1, 0, 3), f=2)]
    buf = io.StringIO()
    write_bmap_trace(buf, maps)
    assert buf.getvalue().splitlines()[0] == "frame_index,alloc_id,onu_id,start_word,grant_words,dbru_flag"
    buf.seek(0)
    assert read_bmap_trace(buf) == maps
