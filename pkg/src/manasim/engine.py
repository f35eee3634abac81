"""Trace-driven fetch simulation producing coverage, timeliness and bandwidth reports."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

from .baselines import (
    NextLineConfig,
    NextLinePrefetcher,
    NoPrefetcher,
    PifConfig,
    PifPrefetcher,
    RdipConfig,
    RdipPrefetcher,
    rdip_signature,
)
from .cache import AccessKind, CacheGeometry, InstructionCache, SetAssociativeCache
from .mana import ManaConfig, ManaPrefetcher
from .regions import RegionCreator, RegionGeometry
from .trace import BLOCK_OFFSET_BITS, BranchKind, TraceRecord

logger = logging.getLogger(__name__)

PrefetcherConfig = Union[None, NextLineConfig, ManaConfig, RdipConfig, PifConfig]

DEFAULT_L1 = CacheGeometry.from_kb(32, 8, hit_latency=4)
DEFAULT_L2 = CacheGeometry.from_kb(512, 8, hit_latency=10)


class EmptyTrace(ValueError):
    pass


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    l1: CacheGeometry = DEFAULT_L1
    l2: CacheGeometry = DEFAULT_L2
    beyond_l2_latency: int = 20
    prefetcher: PrefetcherConfig = None
    # None means the first half of the trace.
    warmup: Optional[int] = None

    @property
    def prefetcher_kind(self) -> str:
        return prefetcher_kind(self.prefetcher)


def prefetcher_kind(config: PrefetcherConfig) -> str:
    if config is None:
        return "none"
    return {NextLineConfig: "nextline", ManaConfig: "mana", RdipConfig: "rdip", PifConfig: "pif"}[type(config)]


def make_prefetcher(config: PrefetcherConfig):
    if config is None:
        return NoPrefetcher()
    if isinstance(config, NextLineConfig):
        return NextLinePrefetcher(config)
    if isinstance(config, ManaConfig):
        return ManaPrefetcher(config)
    if isinstance(config, RdipConfig):
        return RdipPrefetcher(config)
    if isinstance(config, PifConfig):
        return PifPrefetcher(config)
    raise TypeError(f"unknown prefetcher config {config!r}")


# -- distinct records --------------------------------------------------------


class RecordCountKind(Enum):
    MANA_TRIGGER = "mana_trigger"
    PIF_TRIGGER = "pif_trigger"
    RDIP_SIGNATURE = "rdip_signature"


def count_distinct_records(
    trace: Sequence[TraceRecord],
    kind: Union[RecordCountKind, str],
    geometry: Optional[RegionGeometry] = None,
    queue_length: Optional[int] = None,
) -> int:
    """Distinct prefetching records the trace creates, with unbounded metadata."""
    kind = RecordCountKind(kind)
    if kind is RecordCountKind.RDIP_SIGNATURE:
        ras: List[int] = []
        seen = {0}
        for rec in trace:
            if rec.branch_kind == BranchKind.CALL:
                ras.append(rec.address + 4)
            elif rec.branch_kind == BranchKind.RET:
                if ras:
                    ras.pop()
            else:
                continue
            seen.add(rdip_signature(ras[::-1][:4], rec.branch_kind))
        return len(seen)

    if kind is RecordCountKind.MANA_TRIGGER:
        defaults = ManaConfig()
        creator = RegionCreator(geometry or defaults.geometry, queue_length or defaults.srq_length)
    else:
        defaults = PifConfig()
        creator = RegionCreator(geometry or defaults.geometry, queue_length or defaults.compactor_length)
    triggers = set()
    for rec in trace:
        block = rec.address >> BLOCK_OFFSET_BITS
        before = creator.created
        creator.observe(block)
        if creator.created != before:
            triggers.add(block)
    return len(triggers)


# -- report ------------------------------------------------------------------


@dataclass
class RunReport:
    prefetcher: str
    instructions: int
    warmup_instructions: int
    baseline_misses: int
    demand_misses: int
    non_covered_misses: int
    untimely_misses: int
    covered_fraction: float
    non_covered_fraction: float
    untimely_fraction: float
    overprediction_ratio: float
    prefetches_issued: int
    prefetches_useful: int
    prefetches_useless: int
    prefetches_in_flight_at_end: int
    prefetches_dropped_present: int
    prefetches_dropped_inflight: int
    l1_external_requests: int
    l2_external_requests: int
    baseline_32k_requests: int
    bandwidth_ratio_vs_no_prefetch_32k: Optional[float]
    fetch_stall_cycles: int
    distinct_record_counts: Dict[str, int] = field(default_factory=dict)
    storage_bits: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def csv_columns(cls) -> List[str]:
        cols = []
        for f in fields(cls):
            if f.name == "distinct_record_counts":
                cols.extend(f"distinct_record_counts.{k.value}" for k in RecordCountKind)
            else:
                cols.append(f.name)
        return cols

    def csv_row(self) -> List[str]:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "distinct_record_counts":
                out.extend(str(value.get(k.value, "")) for k in RecordCountKind)
            elif value is None:
                out.append("")
            elif isinstance(value, float):
                out.append(repr(value))
            else:
                out.append(str(value))
        return out

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(self.csv_columns())
        w.writerow(self.csv_row())
        return buf.getvalue()


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def run(trace: Sequence[TraceRecord], config: Optional[EngineConfig] = None, count_records: bool = True) -> RunReport:
    """Drive ``trace`` through the L1-I with the configured prefetcher.

    Each record costs one cycle plus the full stall of a blocking miss.
    Records before the warmup point train everything but are not counted.
    """
    config = config or EngineConfig()
    if not trace:
        raise EmptyTrace("trace has no records")
    warmup = len(trace) // 2 if config.warmup is None else config.warmup
    if not 0 <= warmup < len(trace):
        raise ValueError(f"warmup {warmup} must be below the trace length {len(trace)}")

    prefetcher = make_prefetcher(config.prefetcher)
    l1 = InstructionCache(config.l1, config.l2, config.beyond_l2_latency)
    shadow = SetAssociativeCache(config.l1)
    shadow_32k = shadow if config.l1 == DEFAULT_L1 else SetAssociativeCache(DEFAULT_L1)

    l1.counting = False
    baseline_misses = 0
    baseline_32k = 0
    stall_cycles = 0
    cycle = 0
    last_block = None

    for i, rec in enumerate(trace):
        counting = i >= warmup
        l1.counting = counting
        now = cycle
        block = rec.address >> BLOCK_OFFSET_BITS
        stall = 0
        if block != last_block:
            last_block = block
            for cand in prefetcher.on_fetch(block):
                l1.prefetch_access(cand, now)
            outcome = l1.demand_access(block, now)
            shadow_hit = shadow.access(block)
            if shadow_32k is not shadow:
                hit_32k = shadow_32k.access(block)
            else:
                hit_32k = shadow_hit
            if counting:
                baseline_misses += not shadow_hit
                baseline_32k += not hit_32k
            if outcome.kind.is_miss or outcome.kind is AccessKind.MISS_INFLIGHT_DEMAND:
                stall = outcome.completes_at - now
            if outcome.kind.is_miss:
                prefetcher.on_demand_miss(block)
        prefetcher.train(block)
        if rec.branch_kind in (BranchKind.CALL, BranchKind.RET):
            for cand in prefetcher.on_branch(rec):
                l1.prefetch_access(cand, now + stall)
        if counting:
            stall_cycles += stall
        cycle = now + 1 + stall

    l1.tick(cycle)
    st = l1.finish()
    demand_misses = st.demand_misses + st.untimely_misses

    counts = {}
    if count_records:
        counts = {k.value: count_distinct_records(trace, k) for k in RecordCountKind}

    report = RunReport(
        prefetcher=prefetcher.name,
        instructions=len(trace),
        warmup_instructions=warmup,
        baseline_misses=baseline_misses,
        demand_misses=demand_misses,
        non_covered_misses=st.demand_misses,
        untimely_misses=st.untimely_misses,
        covered_fraction=(1.0 - demand_misses / baseline_misses) if baseline_misses else 0.0,
        non_covered_fraction=_ratio(st.demand_misses, baseline_misses),
        untimely_fraction=_ratio(st.untimely_misses, baseline_misses),
        overprediction_ratio=_ratio(st.prefetches_useless, baseline_misses),
        prefetches_issued=st.prefetches_issued,
        prefetches_useful=st.prefetches_useful,
        prefetches_useless=st.prefetches_useless,
        prefetches_in_flight_at_end=st.prefetches_in_flight_at_end,
        prefetches_dropped_present=st.prefetches_dropped_present,
        prefetches_dropped_inflight=st.prefetches_dropped_inflight,
        l1_external_requests=st.l1_external_requests,
        l2_external_requests=st.l2_external_requests,
        baseline_32k_requests=baseline_32k,
        bandwidth_ratio_vs_no_prefetch_32k=(st.l1_external_requests / baseline_32k) if baseline_32k else None,
        fetch_stall_cycles=stall_cycles,
        distinct_record_counts=counts,
        storage_bits=prefetcher.storage_bits(),
    )
    check_report(report)
    return report


def check_report(report: RunReport) -> None:
    """Raise InvariantViolation if the report's accounting identities fail."""
    problems = []
    if report.non_covered_misses + report.untimely_misses != report.demand_misses:
        problems.append("non_covered + untimely != demand_misses")
    resolved = report.prefetches_useful + report.prefetches_useless + report.prefetches_in_flight_at_end
    if resolved != report.prefetches_issued:
        problems.append(f"issued {report.prefetches_issued} != useful + useless + in-flight {resolved}")
    for name in ("non_covered_fraction", "untimely_fraction", "overprediction_ratio"):
        if getattr(report, name) < 0:
            problems.append(f"{name} is negative")
    if problems:
        raise InvariantViolation("; ".join(problems))
