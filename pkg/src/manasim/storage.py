"""Bit-level storage accounting for prefetcher metadata."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Dict, List, Optional

KB_BITS = 8192

# HOBP index widths measured for each partial-tag length on a 4K-entry,
# 1K-set table; HOBPT capacity is 2**bits.
MEASURED_HOBP_INDEX_BITS: Dict[int, int] = {0: 9, 1: 8, 2: 7, 5: 5, 8: 3, 11: 3}
MIN_HOBP_INDEX_BITS = 3


class InvalidGeometry(ValueError):
    pass


class UnknownKind(ValueError):
    pass


def _log2(n: int, what: str) -> int:
    if n < 1 or n & (n - 1):
        raise InvalidGeometry(f"{what} must be a power of two, got {n}")
    return n.bit_length() - 1


def format_kb(bits: int) -> str:
    """Bits as KB, rounded half-up to two decimals, trailing zeros dropped."""
    kb = (Decimal(bits) / KB_BITS).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    text = f"{kb:f}"
    return text.rstrip("0").rstrip(".") if "." in text else text


def required_hobp_index_bits(distinct_patterns: int) -> int:
    """Index width for a HOBPT that holds ``distinct_patterns`` patterns (8-entry floor)."""
    if distinct_patterns < 1:
        return MIN_HOBP_INDEX_BITS
    return max(MIN_HOBP_INDEX_BITS, math.ceil(math.log2(distinct_patterns)))


@dataclass(frozen=True)
class StorageBreakdown:
    partial_tag_bits: int
    hobp_index_bits: int
    hobp_width: int
    footprint_bits: int
    successor_bits: int
    table_entries: int
    hobpt_entries: int

    @property
    def entry_bits(self) -> int:
        return self.hobp_index_bits + self.partial_tag_bits + self.footprint_bits + self.successor_bits

    @property
    def mana_table_bits(self) -> int:
        return self.entry_bits * self.table_entries

    @property
    def hobpt_bits(self) -> int:
        return self.hobpt_entries * self.hobp_width

    @property
    def total_bits(self) -> int:
        return self.mana_table_bits + self.hobpt_bits

    def row(self) -> List[str]:
        return [
            str(self.partial_tag_bits),
            str(self.hobp_index_bits),
            f"{format_kb(self.hobpt_bits)} KB",
            f"{format_kb(self.mana_table_bits)} KB",
            f"{format_kb(self.total_bits)} KB",
        ]


TABLE_HEADER = ["Partial Tag Bits", "HOBP Index Bits", "HOBPT Storage", "MANA_Table Storage", "Sum"]


def mana_storage_breakdown(
    partial_tag_bits: int,
    *,
    address_bits: int = 46,
    block_offset_bits: int = 6,
    table_entries: int = 4096,
    table_sets: int = 1024,
    footprint_bits: int = 8,
    successor_bits: int = 12,
    hobp_index_bits: Optional[int] = None,
) -> StorageBreakdown:
    """Storage of a MANA table plus its HOBPT for one partial-tag split.

    Without an explicit ``hobp_index_bits`` the measured width for the
    partial-tag length is used; lengths without a measurement are rejected.
    """
    set_bits = _log2(table_sets, "table_sets")
    _log2(table_entries, "table_entries")
    if table_entries < table_sets:
        raise InvalidGeometry("fewer entries than sets")
    block_bits = address_bits - block_offset_bits
    if partial_tag_bits < 0 or partial_tag_bits + set_bits > block_bits:
        raise InvalidGeometry(
            f"partial tag of {partial_tag_bits} bits plus {set_bits} set bits exceeds a {block_bits}-bit block address"
        )
    if hobp_index_bits is None:
        if partial_tag_bits not in MEASURED_HOBP_INDEX_BITS:
            raise InvalidGeometry(
                f"no measured HOBP index width for a {partial_tag_bits}-bit partial tag; pass hobp_index_bits"
            )
        hobp_index_bits = MEASURED_HOBP_INDEX_BITS[partial_tag_bits]
    if hobp_index_bits < 0:
        raise InvalidGeometry("negative HOBP index width")
    return StorageBreakdown(
        partial_tag_bits=partial_tag_bits,
        hobp_index_bits=hobp_index_bits,
        hobp_width=block_bits - set_bits - partial_tag_bits,
        footprint_bits=footprint_bits,
        successor_bits=successor_bits,
        table_entries=table_entries,
        hobpt_entries=1 << hobp_index_bits,
    )


def storage_table(partial_tags=None) -> List[StorageBreakdown]:
    tags = sorted(MEASURED_HOBP_INDEX_BITS) if partial_tags is None else partial_tags
    return [mana_storage_breakdown(p) for p in tags]


def render_table(rows: List[StorageBreakdown]) -> str:
    cells = [TABLE_HEADER] + [r.row() for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(TABLE_HEADER))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(line, widths)).rstrip() for line in cells) + "\n"


def render_csv(rows: List[StorageBreakdown]) -> str:
    lines = ["partial_tag_bits,hobp_index_bits,hobpt_kb,mana_table_kb,sum_kb,hobpt_bits,mana_table_bits,sum_bits"]
    for r in rows:
        lines.append(
            ",".join(
                str(v)
                for v in (
                    r.partial_tag_bits,
                    r.hobp_index_bits,
                    format_kb(r.hobpt_bits),
                    format_kb(r.mana_table_bits),
                    format_kb(r.total_bits),
                    r.hobpt_bits,
                    r.mana_table_bits,
                    r.total_bits,
                )
            )
        )
    return "\n".join(lines) + "\n"


# -- per-record sizes -------------------------------------------------------


class RecordKind(Enum):
    RDIP_MISS_TABLE_ENTRY = "rdip_miss_table_entry"
    SHOTGUN_UBTB_ENTRY = "shotgun_ubtb_entry"
    PIF_INDEX_PLUS_HISTORY_ENTRY = "pif_index_plus_history_entry"
    MANA_TABLE_ENTRY = "mana_table_entry"


def rdip_entry_bits(
    *, signature_bits=32, table_entries=4096, table_ways=4, slots=3, address_bits=46, block_offset_bits=6, footprint_bits=8
) -> int:
    set_bits = _log2(table_entries // table_ways, "RDIP set count")
    trigger_bits = address_bits - block_offset_bits
    return (signature_bits - set_bits) + slots * (trigger_bits + footprint_bits)


def shotgun_ubtb_entry_bits(
    *, address_bits=46, btb_entries=2048, btb_ways=4, size_bits=5, type_bits=1, footprint_bits=8, footprints=2
) -> int:
    # Basic-block addresses are byte addresses, so the tag keeps the offset bits.
    set_bits = _log2(btb_entries // btb_ways, "BTB set count")
    return (address_bits - set_bits) + address_bits + size_bits + type_bits + footprints * footprint_bits


def pif_index_entry_bits(*, index_entries=8192, index_ways=4, history_entries=32768, address_bits=46, block_offset_bits=6) -> int:
    set_bits = _log2(index_entries // index_ways, "PIF index set count")
    pointer_bits = _log2(history_entries, "history_entries")
    return (address_bits - block_offset_bits - set_bits) + pointer_bits


def pif_history_entry_bits(*, address_bits=46, block_offset_bits=6, footprint_bits=8) -> int:
    return address_bits - block_offset_bits + footprint_bits


def pif_storage_bits(*, index_entries=8192, index_ways=4, history_entries=32768, footprint_bits=8, address_bits=46, block_offset_bits=6) -> int:
    index = pif_index_entry_bits(
        index_entries=index_entries,
        index_ways=index_ways,
        history_entries=history_entries,
        address_bits=address_bits,
        block_offset_bits=block_offset_bits,
    )
    history = pif_history_entry_bits(
        address_bits=address_bits, block_offset_bits=block_offset_bits, footprint_bits=footprint_bits
    )
    return index_entries * index + history_entries * history


def mana_entry_bits(*, hobp_index_bits=7, partial_tag_bits=2, footprint_bits=8, successor_bits=12) -> int:
    return hobp_index_bits + partial_tag_bits + footprint_bits + successor_bits


def record_size_bits(kind, **params) -> int:
    try:
        kind = RecordKind(kind)
    except ValueError:
        raise UnknownKind(f"unknown record kind {kind!r}") from None
    if kind is RecordKind.RDIP_MISS_TABLE_ENTRY:
        return rdip_entry_bits(**params)
    if kind is RecordKind.SHOTGUN_UBTB_ENTRY:
        return shotgun_ubtb_entry_bits(**params)
    if kind is RecordKind.PIF_INDEX_PLUS_HISTORY_ENTRY:
        history_params = {k: v for k, v in params.items() if k in ("address_bits", "block_offset_bits", "footprint_bits")}
        index_params = {k: v for k, v in params.items() if k != "footprint_bits"}
        return pif_index_entry_bits(**index_params) + pif_history_entry_bits(**history_params)
    return mana_entry_bits(**params)
