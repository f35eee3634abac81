"""Reference instruction prefetchers: none, next-line, RDIP and PIF.

All prefetchers share the engine protocol used by ``ManaPrefetcher``:
``on_fetch(block)``, ``train(block)``, ``on_demand_miss(block)`` and
``on_branch(record)``; the last and first return prefetch candidates.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Sequence, Tuple

from .regions import BLOCK_LIMIT, RegionCreator, RegionGeometry, SpatialRegion, region_blocks
from .trace import INSTRUCTION_BYTES, BranchKind, TraceRecord

SIGNATURE_MASK = 0xFFFF_FFFF


class NoPrefetcher:
    name = "none"

    def on_fetch(self, block: int) -> List[int]:
        return []

    def train(self, retired_block: int) -> None:
        pass

    def on_demand_miss(self, block: int) -> None:
        pass

    def on_branch(self, record: TraceRecord) -> List[int]:
        return []

    def storage_bits(self) -> int:
        return 0


@dataclass(frozen=True)
class NextLineConfig:
    degree: int = 1

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise ValueError("next-line degree must be at least 1")


class NextLinePrefetcher(NoPrefetcher):
    name = "nextline"

    def __init__(self, config: Optional[NextLineConfig] = None) -> None:
        self.config = config or NextLineConfig()

    def on_fetch(self, block: int) -> List[int]:
        return [b for b in range(block + 1, block + 1 + self.config.degree) if b < BLOCK_LIMIT]


# -- RDIP -----------------------------------------------------------------


def rdip_signature(ras_top: Sequence[int], kind: BranchKind) -> int:
    """XOR of up to four return addresses (most recent first), low bit set on calls."""
    sig = 0
    for addr in ras_top[:4]:
        sig ^= addr & SIGNATURE_MASK
    return sig | 1 if kind == BranchKind.CALL else sig & ~1


@dataclass(frozen=True)
class RdipConfig:
    ras_depth: int = 16
    table_entries: int = 4096
    table_ways: int = 4
    slots: int = 3
    geometry: RegionGeometry = field(default_factory=lambda: RegionGeometry(2, 6))

    def __post_init__(self) -> None:
        if self.ras_depth < 4:
            raise ValueError("RAS depth must be at least 4")
        if self.slots < 1 or self.table_ways < 1 or self.table_entries % self.table_ways:
            raise ValueError("bad miss table geometry")
        sets = self.table_entries // self.table_ways
        if sets & (sets - 1):
            raise ValueError("miss table set count must be a power of two")


class RdipPrefetcher(NoPrefetcher):
    """Miss table keyed by RAS signatures.

    Misses seen under the current signature are filed under the previous
    one, so a lookup on a signature yields the misses of the phase after it.
    """

    name = "rdip"

    def __init__(self, config: Optional[RdipConfig] = None) -> None:
        self.config = cfg = config or RdipConfig()
        self.ras: Deque[int] = deque(maxlen=cfg.ras_depth)
        self.current_signature = 0
        self.previous_signature = 0
        sets = cfg.table_entries // cfg.table_ways
        self._set_mask = sets - 1
        self._set_bits = sets.bit_length() - 1
        # set -> OrderedDict(tag -> [regions, LRU first]), LRU tag first
        self.miss_table: List["OrderedDict[int, List[SpatialRegion]]"] = [OrderedDict() for _ in range(sets)]

    def ras_top(self) -> List[int]:
        return list(reversed(self.ras))[:4]

    def _entry(self, signature: int, allocate: bool) -> Optional[List[SpatialRegion]]:
        s = self.miss_table[signature & self._set_mask]
        tag = signature >> self._set_bits
        slots = s.get(tag)
        if slots is not None:
            s.move_to_end(tag)
            return slots
        if not allocate:
            return None
        if len(s) >= self.config.table_ways:
            s.popitem(last=False)
        s[tag] = slots = []
        return slots

    def on_branch(self, record: TraceRecord) -> List[int]:
        kind = record.branch_kind
        if kind == BranchKind.CALL:
            self.ras.append(record.address + INSTRUCTION_BYTES)
        elif kind == BranchKind.RET:
            if self.ras:
                self.ras.pop()
        else:
            return []
        self.previous_signature = self.current_signature
        self.current_signature = rdip_signature(self.ras_top(), kind)
        slots = self._entry(self.current_signature, allocate=False)
        if not slots:
            return []
        return region_blocks(slots)

    def on_demand_miss(self, block: int) -> None:
        slots = self._entry(self.previous_signature, allocate=True)
        for i, region in enumerate(slots):
            if region.covers(block):
                region.record(block)
                slots.append(slots.pop(i))
                return
        if len(slots) >= self.config.slots:
            slots.pop(0)
        slots.append(SpatialRegion(block, 0, self.config.geometry))

    def storage_bits(self) -> int:
        from .storage import RecordKind, record_size_bits

        cfg = self.config
        return cfg.table_entries * record_size_bits(
            RecordKind.RDIP_MISS_TABLE_ENTRY,
            table_entries=cfg.table_entries,
            table_ways=cfg.table_ways,
            slots=cfg.slots,
            footprint_bits=cfg.geometry.footprint_bits,
        )


# -- PIF ------------------------------------------------------------------


@dataclass(frozen=True)
class PifConfig:
    geometry: RegionGeometry = field(default_factory=lambda: RegionGeometry(2, 6))
    compactor_length: int = 18
    history_entries: int = 32768
    index_entries: int = 8192
    index_ways: int = 4
    sab_count: int = 4
    sab_capacity: int = 7
    lookahead: int = 5

    def __post_init__(self) -> None:
        for name in ("compactor_length", "history_entries", "index_ways", "sab_count", "lookahead"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.sab_capacity < self.lookahead:
            raise ValueError("sab_capacity must be at least the lookahead")
        if self.index_entries % self.index_ways:
            raise ValueError("index_entries must be a multiple of index_ways")
        sets = self.index_entries // self.index_ways
        if sets & (sets - 1):
            raise ValueError("index table set count must be a power of two")


class PifPrefetcher(NoPrefetcher):
    """Circular history of spatial regions plus an index of each trigger's latest position.

    History positions are absolute sequence numbers; a position older than
    one ring length has been overwritten and is treated as absent.
    """

    name = "pif"

    def __init__(self, config: Optional[PifConfig] = None) -> None:
        self.config = cfg = config or PifConfig()
        self.creator = RegionCreator(cfg.geometry, cfg.compactor_length)
        self.history: List[Optional[SpatialRegion]] = [None] * cfg.history_entries
        self.written = 0
        sets = cfg.index_entries // cfg.index_ways
        self._set_mask = sets - 1
        self.index: List["OrderedDict[int, int]"] = [OrderedDict() for _ in range(sets)]
        # Each SAB is a deque of (position, region); MRU SAB last.
        self.sabs: List[Deque[Tuple[int, SpatialRegion]]] = [deque() for _ in range(cfg.sab_count)]

    def _live(self, pos: int) -> bool:
        return self.written - self.config.history_entries <= pos < self.written

    def read(self, pos: int) -> Optional[SpatialRegion]:
        return self.history[pos % self.config.history_entries] if self._live(pos) else None

    def index_lookup(self, trigger: int) -> Optional[int]:
        s = self.index[trigger & self._set_mask]
        pos = s.get(trigger)
        if pos is None:
            return None
        region = self.read(pos)
        if region is None or region.trigger != trigger:
            del s[trigger]
            return None
        return pos

    def train(self, retired_block: int) -> Optional[SpatialRegion]:
        evicted = self.creator.observe(retired_block)
        if evicted is None:
            return None
        pos = self.written
        self.history[pos % self.config.history_entries] = evicted
        self.written += 1
        s = self.index[evicted.trigger & self._set_mask]
        if evicted.trigger in s:
            s.move_to_end(evicted.trigger)
        elif len(s) >= self.config.index_ways:
            s.popitem(last=False)
        s[evicted.trigger] = pos
        return evicted

    def _extend(self, sab: Deque[Tuple[int, SpatialRegion]], count: int) -> List[SpatialRegion]:
        added = []
        for _ in range(count):
            pos = sab[-1][0] + 1
            region = self.read(pos)
            if region is None:
                break
            sab.append((pos, region))
            while len(sab) > self.config.sab_capacity:
                sab.popleft()
            added.append(region)
        return added

    def on_fetch(self, block: int) -> List[int]:
        depth = self.config.lookahead - 1
        for i in range(len(self.sabs) - 1, -1, -1):
            sab = self.sabs[i]
            for pos in range(len(sab) - 1, -1, -1):
                if sab[pos][1].covers(block):
                    self.sabs.append(self.sabs.pop(i))
                    ahead = len(sab) - 1 - pos
                    if ahead >= depth:
                        return []
                    return region_blocks(self._extend(sab, depth - ahead), block)

        pos = self.index_lookup(block)
        if pos is None:
            return []
        sab = self.sabs.pop(0)
        self.sabs.append(sab)
        sab.clear()
        seed = self.read(pos)
        sab.append((pos, seed))
        return region_blocks([seed] + self._extend(sab, depth), block)

    def storage_bits(self) -> int:
        from .storage import pif_storage_bits

        cfg = self.config
        return pif_storage_bits(
            index_entries=cfg.index_entries,
            index_ways=cfg.index_ways,
            history_entries=cfg.history_entries,
            footprint_bits=cfg.geometry.footprint_bits,
        )

