"""Spatial regions and the retire-stream region creator shared by MANA and PIF.

A region is a trigger block plus a footprint bit-vector over an (X, Y)
neighbourhood: X blocks behind and Y blocks ahead of the trigger. The
trigger itself never owns a bit.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Iterable, List, Optional

BLOCK_BITS = 40
BLOCK_LIMIT = 1 << BLOCK_BITS


@dataclass(frozen=True)
class RegionGeometry:
    behind: int = 0
    ahead: int = 8

    def __post_init__(self) -> None:
        if self.behind < 0 or self.ahead < 0 or self.behind + self.ahead == 0:
            raise ValueError(f"invalid region geometry ({self.behind}, {self.ahead})")

    @property
    def footprint_bits(self) -> int:
        return self.behind + self.ahead

    def bit_for(self, delta: int) -> Optional[int]:
        """Footprint bit for a block at ``trigger + delta``, or None if outside."""
        if delta == 0 or delta < -self.behind or delta > self.ahead:
            return None
        if delta < 0:
            return self.behind + delta
        return self.behind + delta - 1

    def delta_for(self, bit: int) -> int:
        if not 0 <= bit < self.footprint_bits:
            raise ValueError(f"bit {bit} outside a {self.footprint_bits}-bit footprint")
        if bit < self.behind:
            return bit - self.behind
        return bit - self.behind + 1

    def __str__(self) -> str:
        return f"({self.behind}, {self.ahead})"


@dataclass
class SpatialRegion:
    trigger: int
    footprint: int = 0
    geometry: RegionGeometry = field(default_factory=RegionGeometry)

    def covers(self, block: int) -> bool:
        delta = block - self.trigger
        return -self.geometry.behind <= delta <= self.geometry.ahead

    def record(self, block: int) -> None:
        bit = self.geometry.bit_for(block - self.trigger)
        if bit is not None:
            self.footprint |= 1 << bit

    def blocks(self) -> List[int]:
        """Trigger first, then footprint blocks in bit order; out-of-range blocks dropped."""
        out = [self.trigger]
        for bit in range(self.geometry.footprint_bits):
            if self.footprint >> bit & 1:
                b = self.trigger + self.geometry.delta_for(bit)
                if 0 <= b < BLOCK_LIMIT:
                    out.append(b)
        return out

    def footprint_string(self) -> str:
        return "".join(
            "1" if self.footprint >> bit & 1 else "0"
            for bit in range(self.geometry.footprint_bits)
        )

    def __str__(self) -> str:
        return f"({self.trigger:#x}, {self.footprint_string()})"


class RegionCreator:
    """Compacts the retire-order block stream into spatial regions.

    Holds a bounded queue of regions under construction. A block inside any
    queued region's window sets that region's bit; any other block opens a
    new region, pushing the oldest one out once the queue is full.
    """

    def __init__(self, geometry: RegionGeometry, length: int) -> None:
        if length < 1:
            raise ValueError("region queue length must be positive")
        self.geometry = geometry
        self.length = length
        self.queue: Deque[SpatialRegion] = deque()
        self.last_block: Optional[int] = None
        self.created = 0

    def observe(self, block: int) -> Optional[SpatialRegion]:
        """Feed one retired block; return the region evicted from the queue, if any."""
        if block == self.last_block:
            return None
        self.last_block = block
        for region in self.queue:
            if region.covers(block):
                region.record(block)
                return None
        evicted = self.queue.popleft() if len(self.queue) == self.length else None
        self.queue.append(SpatialRegion(block, 0, self.geometry))
        self.created += 1
        return evicted


def region_blocks(regions: Iterable[SpatialRegion], exclude: Optional[int] = None) -> List[int]:
    """Blocks encoded by ``regions`` in issue order, deduplicated, minus ``exclude``."""
    seen = set() if exclude is None else {exclude}
    out = []
    for region in regions:
        for b in region.blocks():
            if b not in seen:
                seen.add(b)
                out.append(b)
    return out
