import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from manasim.trace import (
    ADDRESS_LIMIT,
    AddressOutOfRange,
    BadMagic,
    BadVersion,
    BranchKind,
    InvalidRecord,
    SyntheticTraceSpec,
    TraceKind,
    TraceRecord,
    TruncatedRecord,
    blocks_of,
    format_text,
    generate,
    load_trace,
    parse_text,
    parse_trace,
    write_trace,
)

HEADER = b"MIT1\x01"


def test_single_record_parses():
    data = HEADER + (0x40).to_bytes(8, "little") + b"\x00"
    assert parse_trace(data) == [TraceRecord(0x40, BranchKind.NONE, False)]


def test_header_only_is_empty():
    assert parse_trace(HEADER) == []


def test_address_bit_50_rejected():
    data = HEADER + (1 << 50).to_bytes(8, "little") + b"\x00"
    with pytest.raises(AddressOutOfRange) as err:
        parse_trace(data)
    assert err.value.offset == 5


def test_bad_headers():
    with pytest.raises(BadMagic):
        parse_trace(b"XXXX\x01")
    with pytest.raises(BadVersion):
        parse_trace(b"MIT1\x02")
    with pytest.raises(BadVersion):
        parse_trace(b"MIT1")


def test_truncated_record():
    with pytest.raises(TruncatedRecord):
        parse_trace(HEADER + b"\x00" * 10)


def test_bad_flags():
    addr = (0x40).to_bytes(8, "little")
    with pytest.raises(InvalidRecord):
        parse_trace(HEADER + addr + b"\x06")
    with pytest.raises(InvalidRecord):
        parse_trace(HEADER + addr + b"\x10")
    # taken bit on a non-branch
    with pytest.raises(InvalidRecord):
        parse_trace(HEADER + addr + b"\x08")


def test_write_sizes():
    assert write_trace([]) == HEADER
    recs = [TraceRecord(i * 64) for i in range(3)]
    assert len(write_trace(recs)) == 5 + 27


def test_flag_byte_layout():
    data = write_trace([TraceRecord(0x80, BranchKind.CALL, True)])
    assert data[-1] == 0x0B


def test_record_validation():
    with pytest.raises(InvalidRecord):
        TraceRecord(ADDRESS_LIMIT)
    with pytest.raises(InvalidRecord):
        TraceRecord(0, BranchKind.NONE, True)
    assert TraceRecord(0x1FC0).block == 0x7F


def _random_record(rng):
    kind = BranchKind(rng.randrange(6))
    taken = kind != BranchKind.NONE and rng.random() < 0.5
    return TraceRecord(rng.randrange(ADDRESS_LIMIT), kind, taken)


def test_round_trip_10k_records():
    rng = random.Random(11)
    recs = [_random_record(rng) for _ in range(10_000)]
    assert parse_trace(write_trace(recs)) == recs


records = st.builds(
    lambda a, k, t: TraceRecord(a, k, t and k != BranchKind.NONE),
    st.integers(0, ADDRESS_LIMIT - 1),
    st.sampled_from(list(BranchKind)),
    st.booleans(),
)


@given(st.lists(records, max_size=50))
def test_binary_round_trip_property(recs):
    assert parse_trace(write_trace(recs)) == recs


@given(st.lists(records, max_size=50))
def test_text_round_trip_property(recs):
    assert parse_text(format_text(recs)) == recs


def test_text_format_details():
    recs = parse_text("# header\n40\n  80 c+  # call\n\nc0 r+\n100 b\n")
    assert recs == [
        TraceRecord(0x40),
        TraceRecord(0x80, BranchKind.CALL, True),
        TraceRecord(0xC0, BranchKind.RET, True),
        TraceRecord(0x100, BranchKind.CONDITIONAL, False),
    ]
    with pytest.raises(InvalidRecord):
        parse_text("40 q")
    with pytest.raises(InvalidRecord):
        parse_text("zz")
    with pytest.raises(AddressOutOfRange):
        parse_text(f"{ADDRESS_LIMIT:x}")


def test_load_trace_detects_format(tmp_path):
    recs = [TraceRecord(0x40), TraceRecord(0x80, BranchKind.RET, True)]
    (tmp_path / "a.mit").write_bytes(write_trace(recs))
    (tmp_path / "a.txt").write_text(format_text(recs))
    assert load_trace(tmp_path / "a.mit") == recs
    assert load_trace(tmp_path / "a.txt") == recs


def test_sequential_loop_blocks():
    recs = generate(SyntheticTraceSpec(TraceKind.SEQUENTIAL_LOOP, 1, 2, 2))
    assert blocks_of(recs) == [0, 1, 0, 1]


def test_segmented_loop_distinct_blocks():
    recs = generate(SyntheticTraceSpec(TraceKind.SEGMENTED_LOOP, 8, 16, 5))
    distinct = set()
    for r in recs:
        distinct.add(r.address // 64)
    assert len(distinct) == 128
    assert len(recs) == 8 * 16 * 5
    bases = sorted({r.address >> 20 for r in recs})
    assert bases == list(range(8))


@pytest.mark.parametrize("segments", [1, 2, 3, 6])
def test_call_chain_balanced(segments):
    recs = generate(SyntheticTraceSpec(TraceKind.CALL_CHAIN, segments, 8, 3))
    depth = 0
    for r in recs:
        if r.branch_kind == BranchKind.CALL:
            depth += 1
        elif r.branch_kind == BranchKind.RET:
            depth -= 1
            assert depth >= 0
    assert depth == 0
    calls = sum(r.branch_kind == BranchKind.CALL for r in recs)
    assert calls == 3 * segments


def test_random_walk_deterministic_and_sized():
    spec = SyntheticTraceSpec(TraceKind.RANDOM_WALK, 4, 32, 3, seed=9)
    a, b = generate(spec), generate(spec)
    assert a == b and len(a) == 4 * 32 * 3
    assert generate(SyntheticTraceSpec(TraceKind.RANDOM_WALK, 4, 32, 3, seed=10)) != a
    assert {r.address >> 20 for r in a} <= set(range(4))


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticTraceSpec(TraceKind.SEQUENTIAL_LOOP, 0)
    with pytest.raises(ValueError):
        SyntheticTraceSpec(TraceKind.SEGMENTED_LOOP, 1, 1 << 15)
