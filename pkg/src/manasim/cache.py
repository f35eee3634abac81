"""Set-associative LRU caches and a timed L1-I over L2 fill model."""

from __future__ import annotations

import heapq
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional

BLOCK_BYTES = 64


@dataclass(frozen=True)
class CacheGeometry:
    total_bytes: int
    ways: int
    hit_latency: int = 4
    block_bytes: int = BLOCK_BYTES

    def __post_init__(self) -> None:
        if self.block_bytes != BLOCK_BYTES:
            raise ValueError("block size is fixed at 64 bytes")
        if self.ways < 1 or self.total_bytes < 1:
            raise ValueError("cache size and associativity must be positive")
        if self.total_bytes % (self.ways * self.block_bytes):
            raise ValueError(
                f"{self.total_bytes} bytes is not a multiple of {self.ways} ways x {self.block_bytes} B"
            )
        sets = self.sets
        if sets & (sets - 1):
            raise ValueError(f"set count {sets} is not a power of two")
        if self.hit_latency < 0:
            raise ValueError("latency must be non-negative")

    @classmethod
    def from_kb(cls, kb: float, ways: int, hit_latency: int = 4) -> "CacheGeometry":
        return cls(int(kb * 1024), ways, hit_latency)

    @property
    def sets(self) -> int:
        return self.total_bytes // (self.ways * self.block_bytes)

    @property
    def blocks(self) -> int:
        return self.total_bytes // self.block_bytes


@dataclass
class CacheLine:
    tag: int
    prefetched: bool = False
    counted: bool = False
    valid: bool = True


class SetAssociativeCache:
    """Untimed block store. Each set is an OrderedDict ordered LRU -> MRU."""

    def __init__(self, geometry: CacheGeometry) -> None:
        self.geometry = geometry
        self._mask = geometry.sets - 1
        self._sets: List["OrderedDict[int, CacheLine]"] = [OrderedDict() for _ in range(geometry.sets)]

    def set_index(self, block: int) -> int:
        return block & self._mask

    def lookup(self, block: int, promote: bool = True) -> Optional[CacheLine]:
        s = self._sets[block & self._mask]
        line = s.get(block)
        if line is not None and promote:
            s.move_to_end(block)
        return line

    def __contains__(self, block: int) -> bool:
        return block in self._sets[block & self._mask]

    def insert(self, line: CacheLine) -> Optional[CacheLine]:
        """Install at MRU; return the LRU victim if the set was full."""
        s = self._sets[line.tag & self._mask]
        victim = None
        if line.tag not in s and len(s) >= self.geometry.ways:
            _, victim = s.popitem(last=False)
        s[line.tag] = line
        s.move_to_end(line.tag)
        return victim

    def access(self, block: int) -> bool:
        """Demand access with immediate fill on miss; True on hit."""
        if self.lookup(block) is not None:
            return True
        self.insert(CacheLine(block))
        return False

    def lru_order(self, set_index: int) -> List[int]:
        return list(self._sets[set_index])

    def lines(self):
        for s in self._sets:
            yield from s.values()


class AccessKind(Enum):
    HIT = "hit"
    HIT_ON_PREFETCHED_LINE = "hit_on_prefetched_line"
    MISS_NO_INFLIGHT = "miss_no_inflight"
    MISS_INFLIGHT_PREFETCH = "miss_inflight_prefetch"
    # Demand to a block whose demand fill is still outstanding; merged, not a new miss.
    MISS_INFLIGHT_DEMAND = "miss_inflight_demand"

    @property
    def is_miss(self) -> bool:
        return self in (AccessKind.MISS_NO_INFLIGHT, AccessKind.MISS_INFLIGHT_PREFETCH)


@dataclass(frozen=True)
class AccessOutcome:
    kind: AccessKind
    completes_at: int


class PrefetchResult(Enum):
    DROPPED_PRESENT = "dropped_present"
    DROPPED_INFLIGHT = "dropped_inflight"
    ISSUED = "issued"


class FillOrigin(Enum):
    DEMAND = "demand"
    PREFETCH = "prefetch"


@dataclass
class InFlightFill:
    block: int
    ready_at: int
    origin: FillOrigin
    counted: bool = False
    demanded: bool = False


@dataclass
class CacheStats:
    demand_accesses: int = 0
    demand_hits: int = 0
    prefetched_hits: int = 0
    demand_misses: int = 0
    untimely_misses: int = 0
    demand_fills: int = 0
    prefetches_issued: int = 0
    prefetches_dropped_present: int = 0
    prefetches_dropped_inflight: int = 0
    prefetches_useful: int = 0
    prefetches_useless: int = 0
    prefetches_in_flight_at_end: int = 0
    l1_external_requests: int = 0
    l2_external_requests: int = 0


class InstructionCache:
    """L1-I with in-flight fill tracking, backed by an L2 and a flat memory latency.

    Counters only advance while ``counting`` is set; a prefetch is attributed
    to the counting window it was issued in, so the issued = useful + useless
    + in-flight identity holds across a warmup boundary.

    A prefetch that a demand catches in flight is counted useful: the block
    was wanted, the prefetch was merely late.
    """

    def __init__(
        self,
        l1: CacheGeometry,
        l2: Optional[CacheGeometry] = None,
        beyond_l2_latency: int = 20,
    ) -> None:
        self.l1 = SetAssociativeCache(l1)
        self.l2 = SetAssociativeCache(l2) if l2 is not None else None
        self.beyond_l2_latency = beyond_l2_latency
        self.stats = CacheStats()
        self.counting = True
        self._inflight: Dict[int, InFlightFill] = {}
        self._heap: List[tuple] = []
        self._seq = 0
        self._now = 0

    # -- timing ----------------------------------------------------------

    def _advance(self, now: int) -> None:
        if now < self._now:
            raise ValueError(f"time went backwards: {now} < {self._now}")
        self._now = now

    def _fill_latency(self, block: int) -> int:
        if self.counting:
            self.stats.l1_external_requests += 1
        if self.l2 is None:
            if self.counting:
                self.stats.l2_external_requests += 1
            return self.beyond_l2_latency
        latency = self.l2.geometry.hit_latency
        if self.l2.lookup(block) is None:
            # L2 fills on the way back, for prefetches as for demands.
            self.l2.insert(CacheLine(block))
            latency += self.beyond_l2_latency
            if self.counting:
                self.stats.l2_external_requests += 1
        return latency

    def _start_fill(self, block: int, origin: FillOrigin, now: int) -> InFlightFill:
        assert block not in self._inflight, f"second in-flight fill for block {block:#x}"
        fill = InFlightFill(block, now + self._fill_latency(block), origin, self.counting)
        self._inflight[block] = fill
        heapq.heappush(self._heap, (fill.ready_at, self._seq, block))
        self._seq += 1
        return fill

    def _install(self, line: CacheLine) -> None:
        victim = self.l1.insert(line)
        if victim is not None and victim.prefetched and victim.counted:
            self.stats.prefetches_useless += 1

    def tick(self, now: int) -> List[InFlightFill]:
        """Install every fill with ready_at <= now, oldest first."""
        self._advance(now)
        done = []
        while self._heap and self._heap[0][0] <= now:
            _, _, block = heapq.heappop(self._heap)
            fill = self._inflight.pop(block)
            prefetched = fill.origin is FillOrigin.PREFETCH and not fill.demanded
            self._install(CacheLine(block, prefetched=prefetched, counted=fill.counted))
            done.append(fill)
        return done

    # -- accesses --------------------------------------------------------

    def demand_access(self, block: int, now: int) -> AccessOutcome:
        self.tick(now)
        st = self.stats
        counting = self.counting
        if counting:
            st.demand_accesses += 1
        line = self.l1.lookup(block)
        if line is not None:
            if line.prefetched:
                line.prefetched = False
                if line.counted:
                    st.prefetches_useful += 1
                if counting:
                    st.prefetched_hits += 1
                kind = AccessKind.HIT_ON_PREFETCHED_LINE
            else:
                kind = AccessKind.HIT
            if counting:
                st.demand_hits += 1
            return AccessOutcome(kind, now)

        fill = self._inflight.get(block)
        if fill is not None:
            if fill.origin is FillOrigin.DEMAND or fill.demanded:
                return AccessOutcome(AccessKind.MISS_INFLIGHT_DEMAND, fill.ready_at)
            fill.demanded = True
            if fill.counted:
                st.prefetches_useful += 1
            if counting:
                st.untimely_misses += 1
            return AccessOutcome(AccessKind.MISS_INFLIGHT_PREFETCH, fill.ready_at)

        if counting:
            st.demand_misses += 1
            st.demand_fills += 1
        fill = self._start_fill(block, FillOrigin.DEMAND, now)
        return AccessOutcome(AccessKind.MISS_NO_INFLIGHT, fill.ready_at)

    def prefetch_access(self, block: int, now: int) -> PrefetchResult:
        self.tick(now)
        if block in self.l1:
            if self.counting:
                self.stats.prefetches_dropped_present += 1
            return PrefetchResult.DROPPED_PRESENT
        if block in self._inflight:
            if self.counting:
                self.stats.prefetches_dropped_inflight += 1
            return PrefetchResult.DROPPED_INFLIGHT
        if self.counting:
            self.stats.prefetches_issued += 1
        self._start_fill(block, FillOrigin.PREFETCH, now)
        return PrefetchResult.ISSUED

    def in_flight(self, block: int) -> Optional[InFlightFill]:
        return self._inflight.get(block)

    def finish(self) -> CacheStats:
        """Close the run: unused prefetched lines become useless, open fills are tallied."""
        for line in self.l1.lines():
            if line.prefetched and line.counted:
                self.stats.prefetches_useless += 1
                line.prefetched = False
        self.stats.prefetches_in_flight_at_end = sum(
            1
            for f in self._inflight.values()
            if f.origin is FillOrigin.PREFETCH and f.counted and not f.demanded
        )
        return self.stats
