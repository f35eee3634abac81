"""MANA: spatial-region records chained by successor pointers, with compressed tags.

Regions leave the region creator into a set-associative table. Each entry
keeps only a partial tag plus an index into a small table of high-order-bit
patterns (HOBPs); the set number, partial tag and pattern together rebuild
the trigger. Every insertion points the previously inserted entry at the new
one, so replay can walk the recorded stream entry by entry through a stream
address buffer (SAB).
"""

from __future__ import annotations

import logging
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Tuple

from .regions import BLOCK_BITS, RegionCreator, RegionGeometry, SpatialRegion, region_blocks

logger = logging.getLogger(__name__)


class InvalidSlot(LookupError):
    pass


def _log2(n: int, what: str) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"{what} must be a power of two, got {n}")
    return n.bit_length() - 1


@dataclass(frozen=True)
class ManaConfig:
    geometry: RegionGeometry = field(default_factory=RegionGeometry)
    srq_length: int = 8
    lookahead: int = 3
    table_entries: int = 4096
    table_ways: int = 4
    partial_tag_bits: int = 2
    hobpt_entries: int = 128
    hobpt_ways: int = 8
    sab_count: int = 1
    sab_capacity: int = 5

    def __post_init__(self) -> None:
        for name in ("srq_length", "lookahead", "table_ways", "hobpt_ways", "sab_count", "sab_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.sab_capacity < self.lookahead:
            raise ValueError("sab_capacity must be at least the lookahead")
        if self.table_entries % self.table_ways or self.hobpt_entries % self.hobpt_ways:
            raise ValueError("table sizes must be multiples of their associativity")
        set_bits = _log2(self.table_entries // self.table_ways, "table set count")
        _log2(self.table_entries, "table_entries")
        _log2(self.hobpt_entries // self.hobpt_ways, "HOBPT set count")
        _log2(self.hobpt_entries, "hobpt_entries")
        if self.partial_tag_bits < 0 or set_bits + self.partial_tag_bits > BLOCK_BITS:
            raise ValueError("partial tag does not fit in a block address")

    @property
    def table_sets(self) -> int:
        return self.table_entries // self.table_ways

    @property
    def set_bits(self) -> int:
        return self.table_sets.bit_length() - 1

    @property
    def pattern_bits(self) -> int:
        return BLOCK_BITS - self.set_bits - self.partial_tag_bits

    @property
    def hobp_index_bits(self) -> int:
        return self.hobpt_entries.bit_length() - 1

    @property
    def successor_bits(self) -> int:
        return self.table_entries.bit_length() - 1

    @property
    def entry_bits(self) -> int:
        return self.hobp_index_bits + self.partial_tag_bits + self.geometry.footprint_bits + self.successor_bits


class HobpTable:
    """Set-associative LRU store of high-order-bit patterns.

    An index packs (set, way). Evicting a pattern does not touch table
    entries that still point at its index.
    """

    def __init__(self, entries: int, ways: int) -> None:
        self.ways = ways
        self.sets = entries // ways
        self._mask = self.sets - 1
        self._lru: List["OrderedDict[int, int]"] = [OrderedDict() for _ in range(self.sets)]
        self._patterns: List[Optional[int]] = [None] * entries
        self.evictions = 0

    def lookup(self, pattern: int) -> Optional[int]:
        s = pattern & self._mask
        way = self._lru[s].get(pattern)
        return None if way is None else s * self.ways + way

    def get_or_insert(self, pattern: int) -> int:
        s = pattern & self._mask
        lru = self._lru[s]
        way = lru.get(pattern)
        if way is not None:
            lru.move_to_end(pattern)
            return s * self.ways + way
        if len(lru) < self.ways:
            way = len(lru)
        else:
            old, way = lru.popitem(last=False)
            self.evictions += 1
            logger.debug("HOBPT evicts pattern %#x from set %d", old, s)
        lru[pattern] = way
        self._patterns[s * self.ways + way] = pattern
        return s * self.ways + way

    def pattern_at(self, index: int) -> Optional[int]:
        return self._patterns[index]

    def __len__(self) -> int:
        return sum(len(s) for s in self._lru)


@dataclass
class ManaTableEntry:
    hobp_index: int
    partial_tag: int
    footprint: int
    successor: Optional[int] = None


@dataclass
class StreamAddressBuffer:
    capacity: int
    regions: Deque[Tuple[int, SpatialRegion]] = field(default_factory=deque)

    @property
    def cursor(self) -> Optional[int]:
        return self.regions[-1][0] if self.regions else None

    def find(self, block: int) -> Optional[int]:
        """Position of the newest region whose window holds ``block``."""
        for pos in range(len(self.regions) - 1, -1, -1):
            if self.regions[pos][1].covers(block):
                return pos
        return None

    def append(self, slot: int, region: SpatialRegion) -> None:
        self.regions.append((slot, region))
        while len(self.regions) > self.capacity:
            self.regions.popleft()

    def reset(self) -> None:
        self.regions.clear()

    def __len__(self) -> int:
        return len(self.regions)


class ManaPrefetcher:
    name = "mana"

    def __init__(self, config: Optional[ManaConfig] = None) -> None:
        self.config = cfg = config or ManaConfig()
        self.creator = RegionCreator(cfg.geometry, cfg.srq_length)
        self.hobpt = HobpTable(cfg.hobpt_entries, cfg.hobpt_ways)
        self._ways = cfg.table_ways
        self._set_mask = cfg.table_sets - 1
        self._partial_mask = (1 << cfg.partial_tag_bits) - 1
        self.entries: List[Optional[ManaTableEntry]] = [None] * cfg.table_entries
        self._lru: List[List[int]] = [[] for _ in range(cfg.table_sets)]
        self.last_inserted: Optional[int] = None
        # MRU SAB last.
        self.sabs: List[StreamAddressBuffer] = [
            StreamAddressBuffer(cfg.sab_capacity) for _ in range(cfg.sab_count)
        ]

    # -- address split ---------------------------------------------------

    def split(self, trigger: int) -> Tuple[int, int, int]:
        """(pattern, partial tag, set) for a trigger block."""
        cfg = self.config
        s = trigger & self._set_mask
        partial = (trigger >> cfg.set_bits) & self._partial_mask
        pattern = trigger >> (cfg.set_bits + cfg.partial_tag_bits)
        return pattern, partial, s

    def hobpt_get_or_insert(self, pattern: int) -> int:
        if pattern >> self.config.pattern_bits:
            raise ValueError(f"pattern {pattern:#x} wider than {self.config.pattern_bits} bits")
        return self.hobpt.get_or_insert(pattern)

    # -- recording -------------------------------------------------------

    def train(self, retired_block: int) -> Optional[SpatialRegion]:
        evicted = self.creator.observe(retired_block)
        if evicted is not None:
            self.table_insert(evicted)
        return evicted

    def _find_way(self, s: int, hobp_index: int, partial: int) -> Optional[int]:
        base = s * self._ways
        for way in self._lru[s]:
            e = self.entries[base + way]
            if e.hobp_index == hobp_index and e.partial_tag == partial:
                return way
        return None

    def table_insert(self, region: SpatialRegion) -> int:
        pattern, partial, s = self.split(region.trigger)
        hobp_index = self.hobpt_get_or_insert(pattern)
        lru = self._lru[s]
        way = self._find_way(s, hobp_index, partial)
        if way is not None:
            slot = s * self._ways + way
            self.entries[slot].footprint = region.footprint
            lru.remove(way)
        else:
            if len(lru) < self._ways:
                way = len(lru)
            else:
                way = lru.pop(0)
            slot = s * self._ways + way
            self.entries[slot] = ManaTableEntry(hobp_index, partial, region.footprint)
        lru.append(way)
        if self.last_inserted is not None:
            self.entries[self.last_inserted].successor = slot
        self.last_inserted = slot
        return slot

    # -- reading ---------------------------------------------------------

    def _entry(self, slot: int) -> ManaTableEntry:
        if not 0 <= slot < len(self.entries) or self.entries[slot] is None:
            raise InvalidSlot(f"slot {slot} holds no entry")
        return self.entries[slot]

    def reconstruct_trigger(self, slot: int) -> int:
        entry = self._entry(slot)
        cfg = self.config
        pattern = self.hobpt.pattern_at(entry.hobp_index) or 0
        s = slot // self._ways
        return (pattern << (cfg.set_bits + cfg.partial_tag_bits)) | (entry.partial_tag << cfg.set_bits) | s

    def region_at(self, slot: int) -> SpatialRegion:
        entry = self._entry(slot)
        return SpatialRegion(self.reconstruct_trigger(slot), entry.footprint, self.config.geometry)

    def lookup(self, trigger: int) -> Optional[int]:
        """Slot holding ``trigger``; does not disturb replacement state."""
        pattern, partial, s = self.split(trigger)
        hobp_index = self.hobpt.lookup(pattern)
        if hobp_index is None:
            return None
        way = self._find_way(s, hobp_index, partial)
        return None if way is None else s * self._ways + way

    def chase(self, start_slot: int, count: int) -> List[Tuple[int, SpatialRegion]]:
        out = [(start_slot, self.region_at(start_slot))]
        slot = start_slot
        while len(out) < count:
            slot = self.entries[slot].successor
            if slot is None:
                break
            out.append((slot, self.region_at(slot)))
        return out

    # -- replay ----------------------------------------------------------

    def _extend(self, sab: StreamAddressBuffer, count: int) -> List[SpatialRegion]:
        added = []
        for _ in range(count):
            nxt = self.entries[sab.cursor].successor
            if nxt is None:
                break
            region = self.region_at(nxt)
            sab.append(nxt, region)
            added.append(region)
        return added

    def on_fetch(self, block: int) -> List[int]:
        """Prefetch candidates, in issue order, for a newly fetched block.

        The lookahead counts the region being fetched from: with lookahead L
        the SAB is kept L - 1 regions ahead of it.
        """
        depth = self.config.lookahead - 1
        for i in range(len(self.sabs) - 1, -1, -1):
            sab = self.sabs[i]
            pos = sab.find(block)
            if pos is None:
                continue
            self.sabs.append(self.sabs.pop(i))
            ahead = len(sab) - 1 - pos
            if ahead >= depth:
                return []
            return region_blocks(self._extend(sab, depth - ahead), block)

        slot = self.lookup(block)
        if slot is None:
            return []
        sab = self.sabs.pop(0)
        self.sabs.append(sab)
        sab.reset()
        seed = self.region_at(slot)
        sab.append(slot, seed)
        return region_blocks([seed] + self._extend(sab, depth), block)

    # Engine hooks the MANA design does not use.
    def on_demand_miss(self, block: int) -> None:
        pass

    def on_branch(self, record) -> List[int]:
        return []

    def storage_bits(self) -> int:
        cfg = self.config
        return cfg.table_entries * cfg.entry_bits + cfg.hobpt_entries * cfg.pattern_bits
