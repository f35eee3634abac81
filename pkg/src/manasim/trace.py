"""Instruction traces: record type, MIT1 binary/text formats, synthetic generators."""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, List, Sequence, Union

ADDRESS_BITS = 46
ADDRESS_LIMIT = 1 << ADDRESS_BITS
BLOCK_OFFSET_BITS = 6
BLOCK_BYTES = 1 << BLOCK_OFFSET_BITS

MAGIC = b"MIT1"
VERSION = 0x01
HEADER_BYTES = len(MAGIC) + 1
RECORD_BYTES = 9
_RECORD = struct.Struct("<QB")

# Segments of a segmented loop sit this many bytes apart.
SEGMENT_STRIDE = 1 << 20
INSTRUCTION_BYTES = 4


class BranchKind(IntEnum):
    NONE = 0
    CONDITIONAL = 1
    UNCONDITIONAL_DIRECT = 2
    CALL = 3
    RET = 4
    INDIRECT = 5


_SUFFIX = {
    "b": BranchKind.CONDITIONAL,
    "j": BranchKind.UNCONDITIONAL_DIRECT,
    "c": BranchKind.CALL,
    "r": BranchKind.RET,
    "i": BranchKind.INDIRECT,
}
_LETTER = {kind: letter for letter, kind in _SUFFIX.items()}


class TraceError(ValueError):
    """Base for malformed trace input. ``offset`` locates the fault."""

    def __init__(self, message: str, offset: int | None = None) -> None:
        super().__init__(message if offset is None else f"{message} (at offset {offset})")
        self.offset = offset


class BadMagic(TraceError):
    pass


class BadVersion(TraceError):
    pass


class TruncatedRecord(TraceError):
    pass


class AddressOutOfRange(TraceError):
    pass


class InvalidRecord(TraceError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    address: int
    branch_kind: BranchKind = BranchKind.NONE
    taken: bool = False

    def __post_init__(self) -> None:
        if not 0 <= self.address < ADDRESS_LIMIT:
            raise InvalidRecord(f"address {self.address:#x} does not fit in {ADDRESS_BITS} bits")
        if self.branch_kind == BranchKind.NONE and self.taken:
            raise InvalidRecord(f"non-branch record at {self.address:#x} marked taken")

    @property
    def block(self) -> int:
        return self.address >> BLOCK_OFFSET_BITS


def block_of(address: int) -> int:
    return address >> BLOCK_OFFSET_BITS


def write_trace(records: Iterable[TraceRecord]) -> bytes:
    out = bytearray(MAGIC)
    out.append(VERSION)
    for rec in records:
        if not isinstance(rec, TraceRecord):
            raise InvalidRecord(f"not a TraceRecord: {rec!r}")
        flags = int(rec.branch_kind) | (0x08 if rec.taken else 0)
        out += _RECORD.pack(rec.address, flags)
    return bytes(out)


def parse_trace(data: bytes) -> List[TraceRecord]:
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagic("stream does not start with 'MIT1'", 0)
    if len(data) < HEADER_BYTES:
        raise BadVersion("missing version byte", len(MAGIC))
    if data[len(MAGIC)] != VERSION:
        raise BadVersion(f"unsupported version {data[len(MAGIC)]:#04x}", len(MAGIC))
    payload = len(data) - HEADER_BYTES
    if payload % RECORD_BYTES:
        last = HEADER_BYTES + payload - payload % RECORD_BYTES
        raise TruncatedRecord(f"{payload % RECORD_BYTES} trailing bytes", last)

    records = []
    for offset in range(HEADER_BYTES, len(data), RECORD_BYTES):
        address, flags = _RECORD.unpack_from(data, offset)
        if address >> ADDRESS_BITS:
            raise AddressOutOfRange(f"address {address:#x} has bits above {ADDRESS_BITS - 1}", offset)
        kind = flags & 0x07
        if flags & 0xF0 or kind > BranchKind.INDIRECT:
            raise InvalidRecord(f"bad flag byte {flags:#04x}", offset + 8)
        taken = bool(flags & 0x08)
        if kind == BranchKind.NONE and taken:
            raise InvalidRecord("non-branch record marked taken", offset + 8)
        records.append(TraceRecord(address, BranchKind(kind), taken))
    return records


def format_text(records: Iterable[TraceRecord]) -> str:
    lines = []
    for rec in records:
        line = f"{rec.address:x}"
        if rec.branch_kind != BranchKind.NONE:
            line += " " + _LETTER[rec.branch_kind] + ("+" if rec.taken else "")
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")


def parse_text(text: str) -> List[TraceRecord]:
    """Parse the text form: ``<hex address> [<kind letter>[+]]``, '#' comments.

    The kind letter is whitespace-separated because 'b' and 'c' are hex digits.
    """
    records = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) > 2:
            raise InvalidRecord(f"line {lineno}: too many fields", lineno)
        try:
            address = int(parts[0], 16)
        except ValueError:
            raise InvalidRecord(f"line {lineno}: bad address {parts[0]!r}", lineno) from None
        if address >> ADDRESS_BITS:
            raise AddressOutOfRange(f"line {lineno}: address {address:#x} out of range", lineno)
        kind, taken = BranchKind.NONE, False
        if len(parts) == 2:
            suffix = parts[1]
            if suffix.endswith("+"):
                taken, suffix = True, suffix[:-1]
            if suffix not in _SUFFIX:
                raise InvalidRecord(f"line {lineno}: unknown branch kind {parts[1]!r}", lineno)
            kind = _SUFFIX[suffix]
        records.append(TraceRecord(address, kind, taken))
    return records


def load_trace(path: Union[str, Path]) -> List[TraceRecord]:
    """Read a trace file, binary if it starts with the magic, text otherwise."""
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] == MAGIC:
        return parse_trace(data)
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise BadMagic("neither a MIT1 stream nor ASCII text", 0) from None
    return parse_text(text)


# -- synthetic traces ------------------------------------------------------


class TraceKind(Enum):
    SEQUENTIAL_LOOP = "sequential_loop"
    SEGMENTED_LOOP = "segmented_loop"
    CALL_CHAIN = "call_chain"
    RANDOM_WALK = "random_walk"


@dataclass(frozen=True)
class SyntheticTraceSpec:
    kind: TraceKind
    segment_count: int = 1
    blocks_per_segment: int = 16
    iterations: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("segment_count", "blocks_per_segment", "iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must be a 64-bit unsigned value")
        if self.blocks_per_segment * BLOCK_BYTES > SEGMENT_STRIDE:
            raise ValueError(f"segments larger than {SEGMENT_STRIDE} bytes would overlap")
        if self.segment_count * SEGMENT_STRIDE > ADDRESS_LIMIT:
            raise ValueError("too many segments for a 46-bit address space")


def _segment_base(i: int) -> int:
    return i * SEGMENT_STRIDE


def _sequential_loop(spec: SyntheticTraceSpec) -> List[TraceRecord]:
    total = spec.segment_count * spec.blocks_per_segment
    body = [TraceRecord(b * BLOCK_BYTES) for b in range(total)]
    return body * spec.iterations


def _segmented_loop(spec: SyntheticTraceSpec) -> List[TraceRecord]:
    body = [
        TraceRecord(_segment_base(s) + b * BLOCK_BYTES)
        for s in range(spec.segment_count)
        for b in range(spec.blocks_per_segment)
    ]
    return body * spec.iterations


def _call_chain(spec: SyntheticTraceSpec) -> List[TraceRecord]:
    # Segment 0 is entered from a driver block; segment i calls segment i+1
    # from the middle of its body. Calls sit in the last instruction slot of
    # their block so the return address is the next block.
    n, blocks = spec.segment_count, spec.blocks_per_segment
    driver = _segment_base(n)
    last_slot = BLOCK_BYTES - INSTRUCTION_BYTES
    call_at = blocks // 2

    def body(i: int) -> List[TraceRecord]:
        base = _segment_base(i)
        out = []
        for b in range(blocks):
            addr = base + b * BLOCK_BYTES
            is_last = b == blocks - 1
            if i + 1 < n and b == call_at:
                out.append(TraceRecord(addr))
                out.append(TraceRecord(addr + last_slot, BranchKind.CALL, True))
                out.extend(body(i + 1))
                if is_last:
                    out.append(TraceRecord(addr + last_slot + INSTRUCTION_BYTES, BranchKind.RET, True))
                continue
            if is_last:
                out.append(TraceRecord(addr + last_slot, BranchKind.RET, True))
            else:
                out.append(TraceRecord(addr))
        return out

    one = [TraceRecord(driver + last_slot, BranchKind.CALL, True)] + body(0)
    return one * spec.iterations


def _random_walk(spec: SyntheticTraceSpec) -> List[TraceRecord]:
    # Segment bases are scattered inside their 1 MB windows so that set
    # indices do not alias the way the aligned loop layouts do.
    rng = random.Random(spec.seed)
    n, blocks = spec.segment_count, spec.blocks_per_segment
    slack = SEGMENT_STRIDE // BLOCK_BYTES - blocks
    bases = [_segment_base(i) + rng.randint(0, slack) * BLOCK_BYTES for i in range(n)]
    total = n * blocks * spec.iterations
    out: List[TraceRecord] = []
    seg, pos = 0, 0
    while len(out) < total:
        run = rng.randint(1, blocks)
        for _ in range(run):
            if len(out) == total:
                break
            out.append(TraceRecord(bases[seg] + pos * BLOCK_BYTES))
            pos = (pos + 1) % blocks
        if out and len(out) < total:
            last = out.pop()
            out.append(TraceRecord(last.address, BranchKind.UNCONDITIONAL_DIRECT, True))
        seg, pos = rng.randrange(n), rng.randrange(blocks)
    return out


_GENERATORS = {
    TraceKind.SEQUENTIAL_LOOP: _sequential_loop,
    TraceKind.SEGMENTED_LOOP: _segmented_loop,
    TraceKind.CALL_CHAIN: _call_chain,
    TraceKind.RANDOM_WALK: _random_walk,
}


def generate(spec: SyntheticTraceSpec) -> List[TraceRecord]:
    return _GENERATORS[spec.kind](spec)


def blocks_of(records: Sequence[TraceRecord]) -> List[int]:
    return [r.address >> BLOCK_OFFSET_BITS for r in records]
