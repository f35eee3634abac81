from hypothesis import given
from hypothesis import strategies as st

from manasim.regions import BLOCK_LIMIT, RegionCreator, RegionGeometry, SpatialRegion, region_blocks
from oracles import naive_regions

A = 0x1FFCAB32


def test_bit_layout_round_trips():
    g = RegionGeometry(2, 6)
    assert [g.delta_for(b) for b in range(8)] == [-2, -1, 1, 2, 3, 4, 5, 6]
    for bit in range(8):
        assert g.bit_for(g.delta_for(bit)) == bit
    assert g.bit_for(0) is None and g.bit_for(7) is None and g.bit_for(-3) is None


def test_walkthrough_queue_contents():
    c = RegionCreator(RegionGeometry(0, 4), 2)
    B = 0x1FFC0078
    for b in (A, A + 1, B, A + 2):
        assert c.observe(b) is None
    assert [str(r) for r in c.queue] == [f"({A:#x}, 1100)", f"({B:#x}, 0000)"]
    out = c.observe(0x5000)
    assert str(out) == f"({A:#x}, 1100)"


def test_consecutive_duplicates_collapse():
    c = RegionCreator(RegionGeometry(0, 4), 2)
    for _ in range(3):
        c.observe(A)
    assert len(c.queue) == 1 and c.queue[0].footprint == 0 and c.created == 1


def test_blocks_clamped_at_top_of_space():
    r = SpatialRegion(BLOCK_LIMIT - 1, 0b11, RegionGeometry(0, 8))
    assert r.blocks() == [BLOCK_LIMIT - 1]


def test_region_blocks_dedupes_and_excludes():
    g = RegionGeometry(0, 4)
    rs = [SpatialRegion(10, 0b0011, g), SpatialRegion(11, 0b0001, g)]
    assert region_blocks(rs) == [10, 11, 12]
    assert region_blocks(rs, exclude=10) == [11, 12]


@given(
    st.lists(st.integers(0, 60), max_size=300),
    st.integers(0, 3),
    st.integers(1, 8),
    st.integers(1, 6),
)
def test_creator_matches_naive_queue(blocks, behind, ahead, length):
    g = RegionGeometry(behind, ahead)
    c = RegionCreator(g, length)
    got = []
    for b in blocks:
        r = c.observe(b)
        if r is not None:
            got.append((r.trigger, frozenset(r.blocks()[1:])))
    assert got == naive_regions(blocks, behind, ahead, length)
