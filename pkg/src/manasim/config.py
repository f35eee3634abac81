"""JSON run configuration: parsing, dotted overrides and sweep expansion."""

from __future__ import annotations

import copy
import json
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .baselines import NextLineConfig, PifConfig, RdipConfig
from .cache import CacheGeometry
from .engine import DEFAULT_L1, DEFAULT_L2, EngineConfig
from .mana import ManaConfig
from .regions import RegionGeometry


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path at fault, if known."""

    def __init__(self, message: str, key: Optional[str] = None) -> None:
        super().__init__(message)
        self.key = key


class UnknownSweepKey(ConfigError):
    pass


_PREFETCHERS = {
    "none": None,
    "nextline": NextLineConfig,
    "mana": ManaConfig,
    "rdip": RdipConfig,
    "pif": PifConfig,
}

_CACHE_KEYS = {"kb", "ways", "hit_latency"}
_TOP_KEYS = {"l1", "l2", "latency", "prefetcher", "warmup"}

# Bare sweep keys and the config path they stand for.
SWEEP_ALIASES = {
    "lookahead": "prefetcher.lookahead",
    "srq_length": "prefetcher.srq_length",
    "table_entries": "prefetcher.table_entries",
    "table_ways": "prefetcher.table_ways",
    "partial_tag_bits": "prefetcher.partial_tag_bits",
    "geometry": "prefetcher.geometry",
    "sab_count": "prefetcher.sab_count",
    "sab_capacity": "prefetcher.sab_capacity",
}


def default_config_dict() -> Dict[str, Any]:
    return {
        "l1": {"kb": DEFAULT_L1.total_bytes // 1024, "ways": DEFAULT_L1.ways, "hit_latency": DEFAULT_L1.hit_latency},
        "l2": {"kb": DEFAULT_L2.total_bytes // 1024, "ways": DEFAULT_L2.ways, "hit_latency": DEFAULT_L2.hit_latency},
        "latency": {"beyond_l2": 20},
        "prefetcher": {"kind": "none"},
        "warmup": None,
    }


def _parse_geometry(value: Any, key: str) -> RegionGeometry:
    """Accept ``"X:Y"``, ``[X, Y]`` or ``{"behind": X, "ahead": Y}``."""
    try:
        if isinstance(value, str):
            behind, ahead = (int(v) for v in value.split(":"))
        elif isinstance(value, (list, tuple)) and len(value) == 2:
            behind, ahead = int(value[0]), int(value[1])
        elif isinstance(value, dict) and set(value) == {"behind", "ahead"}:
            behind, ahead = int(value["behind"]), int(value["ahead"])
        else:
            raise ValueError
        return RegionGeometry(behind, ahead)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: expected a geometry like \"2:6\", got {value!r}", key) from exc


def _cache(section: Any, defaults: CacheGeometry, key: str) -> CacheGeometry:
    if not isinstance(section, dict):
        raise ConfigError(f"{key} must be an object", key)
    for k in section:
        if k not in _CACHE_KEYS:
            raise ConfigError(f"unknown key {key}.{k}", f"{key}.{k}")
    kb = section.get("kb", defaults.total_bytes // 1024)
    for name, value in (("kb", kb), ("ways", section.get("ways", 1)), ("hit_latency", section.get("hit_latency", 0))):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
            raise ConfigError(f"{key}.{name} must be a non-negative number, got {value!r}", f"{key}.{name}")
    try:
        return CacheGeometry.from_kb(
            kb, section.get("ways", defaults.ways), hit_latency=section.get("hit_latency", defaults.hit_latency)
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}", key) from exc


def _prefetcher(section: Any):
    if not isinstance(section, dict):
        raise ConfigError("prefetcher must be an object", "prefetcher")
    kind = section.get("kind", "none")
    if kind not in _PREFETCHERS:
        raise ConfigError(f"unknown prefetcher kind {kind!r}", "prefetcher.kind")
    cls = _PREFETCHERS[kind]
    params = {k: v for k, v in section.items() if k != "kind"}
    if cls is None:
        if params:
            key = sorted(params)[0]
            raise ConfigError(f"unknown key prefetcher.{key} for kind 'none'", f"prefetcher.{key}")
        return None
    known = {f.name for f in fields(cls)}
    for k in params:
        if k not in known:
            raise ConfigError(f"unknown key prefetcher.{k} for kind {kind!r}", f"prefetcher.{k}")
    if "geometry" in params:
        params["geometry"] = _parse_geometry(params["geometry"], "prefetcher.geometry")
    for k, v in params.items():
        if k != "geometry" and (not isinstance(v, int) or isinstance(v, bool)):
            raise ConfigError(f"prefetcher.{k} must be an integer, got {v!r}", f"prefetcher.{k}")
    try:
        return cls(**params)
    except ValueError as exc:
        raise ConfigError(f"prefetcher: {exc}", "prefetcher") from exc


def config_from_dict(data: Dict[str, Any]) -> EngineConfig:
    """Build an EngineConfig; absent keys take the defaults, unknown keys are rejected."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    for k in data:
        if k not in _TOP_KEYS:
            raise ConfigError(f"unknown key {k}", k)
    latency = data.get("latency", {})
    if not isinstance(latency, dict):
        raise ConfigError("latency must be an object", "latency")
    for k in latency:
        if k != "beyond_l2":
            raise ConfigError(f"unknown key latency.{k}", f"latency.{k}")
    beyond = latency.get("beyond_l2", 20)
    if not isinstance(beyond, int) or beyond < 0:
        raise ConfigError("latency.beyond_l2 must be a non-negative integer", "latency.beyond_l2")
    warmup = data.get("warmup")
    if warmup is not None and (not isinstance(warmup, int) or isinstance(warmup, bool) or warmup < 0):
        raise ConfigError("warmup must be a non-negative integer or null", "warmup")
    return EngineConfig(
        l1=_cache(data.get("l1", {}), DEFAULT_L1, "l1"),
        l2=_cache(data.get("l2", {}), DEFAULT_L2, "l2"),
        beyond_l2_latency=beyond,
        prefetcher=_prefetcher(data.get("prefetcher", {})),
        warmup=warmup,
    )


def load_config_dict(path: Union[str, Path, None]) -> Dict[str, Any]:
    if path is None:
        return default_config_dict()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def parse_value(text: str) -> Any:
    """JSON scalar if it parses, else the raw string (so ``2:6`` stays a string)."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_path(data: Dict[str, Any], path: str, value: Any) -> Dict[str, Any]:
    """Copy of ``data`` with the dotted ``path`` set to ``value``."""
    out = copy.deepcopy(data)
    parts = path.split(".")
    node = out
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"{path}: {part} is not an object", path)
        node = child
    node[parts[-1]] = value
    return out


def apply_override(data: Dict[str, Any], assignment: str) -> Dict[str, Any]:
    path, sep, raw = assignment.partition("=")
    if not sep or not path:
        raise ConfigError(f"override {assignment!r} is not of the form path=value")
    return set_path(data, path, parse_value(raw))


def _sweep_path(key: str) -> str:
    if key in SWEEP_ALIASES:
        return SWEEP_ALIASES[key]
    head = key.split(".", 1)[0]
    if "." in key and head in _TOP_KEYS:
        return key
    raise UnknownSweepKey(f"unknown sweep key {key!r}", key)


def parse_vary(spec: str) -> tuple:
    """``key=v1,v2`` into (config path, raw values)."""
    key, sep, raw = spec.partition("=")
    if not sep or not key:
        raise UnknownSweepKey(f"--vary {spec!r} is not of the form key=v1,v2", key or None)
    path = _sweep_path(key)
    values = [v for v in raw.split(",") if v.strip()]
    if not values:
        raise UnknownSweepKey(f"--vary {key} has no values", key)
    return path, values


def sweep_configs(base: Dict[str, Any], spec: str) -> List[tuple]:
    """(raw value, EngineConfig) for each value of a sweep, in input order."""
    path, values = parse_vary(spec)
    out = []
    for raw in values:
        data = set_path(base, path, parse_value(raw.strip()))
        out.append((raw.strip(), config_from_dict(data)))
    return out
