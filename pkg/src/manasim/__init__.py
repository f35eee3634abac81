"""Trace-driven L1-I prefetching simulator: MANA plus next-line, RDIP and PIF baselines."""

from .engine import EngineConfig, RunReport, count_distinct_records, run
from .mana import ManaConfig, ManaPrefetcher
from .regions import RegionGeometry, SpatialRegion

__version__ = "0.1.0"

__all__ = [
    "EngineConfig",
    "ManaConfig",
    "ManaPrefetcher",
    "RegionGeometry",
    "RunReport",
    "SpatialRegion",
    "count_distinct_records",
    "run",
]
