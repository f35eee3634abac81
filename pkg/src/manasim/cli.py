"""Command line: ``manasim {gen,run,sweep,storage,count-records}``.

Exit codes: 0 success, 2 usage error, 3 input error, 4 invariant violation.
Failures print a JSON object ``{"error": ..., "message": ..., "key": ...}`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, UnknownSweepKey, apply_override, config_from_dict, load_config_dict, sweep_configs
from .engine import EmptyTrace, InvariantViolation, RecordCountKind, RunReport, count_distinct_records, run
from .regions import RegionGeometry
from .storage import InvalidGeometry, mana_storage_breakdown, render_csv, render_table, storage_table
from .trace import SyntheticTraceSpec, TraceError, TraceKind, format_text, generate, load_trace, write_trace

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_INVARIANT = 4

TRACE_KINDS = {
    "loop": TraceKind.SEQUENTIAL_LOOP,
    "segmented": TraceKind.SEGMENTED_LOOP,
    "calls": TraceKind.CALL_CHAIN,
    "random": TraceKind.RANDOM_WALK,
}
TRACE_KINDS.update({k.value: k for k in TraceKind})


class UsageError(Exception):
    pass


def _emit(text: str, out: Optional[str], binary: bytes = None) -> None:
    if out is None or out == "-":
        if binary is not None:
            sys.stdout.buffer.write(binary)
        else:
            sys.stdout.write(text)
        return
    path = Path(out)
    if binary is not None:
        path.write_bytes(binary)
    else:
        path.write_text(text)


def _load_config(args) -> dict:
    data = load_config_dict(args.config)
    for assignment in args.set or []:
        data = apply_override(data, assignment)
    return data


def cmd_gen(args) -> int:
    spec = SyntheticTraceSpec(TRACE_KINDS[args.kind], args.segments, args.blocks, args.iters, args.seed)
    records = generate(spec)
    if args.format == "text":
        _emit(format_text(records), args.out)
    else:
        _emit("", args.out, binary=write_trace(records))
    return EXIT_OK


def cmd_run(args) -> int:
    config = config_from_dict(_load_config(args))
    report = run(load_trace(args.trace), config)
    _emit(report.to_csv() if args.csv else report.to_json(), args.out)
    return EXIT_OK


def _run_one(job):
    trace, config = job
    return run(trace, config)


def cmd_sweep(args) -> int:
    base = _load_config(args)
    rows = sweep_configs(base, args.vary)
    trace = load_trace(args.trace)
    jobs = [(trace, cfg) for _, cfg in rows]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_run_one, jobs))
    else:
        reports = [_run_one(j) for j in jobs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sweep_value"] + RunReport.csv_columns())
    for (value, _), report in zip(rows, reports):
        w.writerow([value] + report.csv_row())
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_storage(args) -> int:
    if args.partial_tag == "all":
        rows = storage_table()
    else:
        try:
            p = int(args.partial_tag)
        except ValueError:
            raise UsageError(f"--partial-tag expects 'all' or an integer, got {args.partial_tag!r}") from None
        rows = [mana_storage_breakdown(p, hobp_index_bits=args.hobp_index_bits)]
    _emit(render_csv(rows) if args.csv else render_table(rows), args.out)
    return EXIT_OK


def cmd_count_records(args) -> int:
    geometry = None
    if args.geometry:
        try:
            behind, ahead = (int(v) for v in args.geometry.split(":"))
        except ValueError:
            raise UsageError(f"--geometry expects X:Y, got {args.geometry!r}") from None
        geometry = RegionGeometry(behind, ahead)
    n = count_distinct_records(load_trace(args.trace), args.kind, geometry, args.queue_length)
    _emit(f"{n}\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manasim", description="Trace-driven instruction prefetcher simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic trace")
    p.add_argument("kind", choices=sorted(TRACE_KINDS))
    p.add_argument("--segments", type=int, default=1)
    p.add_argument("--blocks", type=int, default=16)
    p.add_argument("--iters", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["binary", "text"], default="binary")
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=cmd_gen)

    def add_config(p):
        p.add_argument("--trace", required=True, help="MIT1 binary or text trace")
        p.add_argument("--config", help="JSON run configuration (default: built-in defaults)")
        p.add_argument("--set", action="append", metavar="PATH=VALUE", help="override a config value")
        p.add_argument("--out", help="output path (default: stdout)")

    p = sub.add_parser("run", help="simulate one configuration")
    add_config(p)
    p.add_argument("--csv", action="store_true", help="emit a CSV row instead of JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="simulate one configuration per value of a parameter")
    add_config(p)
    p.add_argument("--vary", required=True, metavar="KEY=V1,V2,...")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("storage", help="MANA storage for partial-tag lengths")
    p.add_argument("--partial-tag", default="all", help="'all' or a bit count")
    p.add_argument("--hobp-index-bits", type=int, help="index width for unmeasured partial-tag lengths")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_storage)

    p = sub.add_parser("count-records", help="distinct prefetch records a trace creates")
    p.add_argument("--trace", required=True)
    p.add_argument("--kind", required=True, choices=[k.value for k in RecordCountKind])
    p.add_argument("--geometry", help="region window X:Y")
    p.add_argument("--queue-length", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_count_records)
    return parser


def _fail(code: int, exc: BaseException, key: Optional[str] = None) -> int:
    err = {"error": type(exc).__name__, "message": str(exc)}
    if key is not None:
        err["key"] = key
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, UnknownSweepKey) as exc:
        return _fail(EXIT_USAGE, exc, getattr(exc, "key", None))
    except ConfigError as exc:
        return _fail(EXIT_INPUT, exc, exc.key)
    except InvariantViolation as exc:
        return _fail(EXIT_INVARIANT, exc)
    except (TraceError, EmptyTrace, InvalidGeometry, OSError, ValueError) as exc:
        return _fail(EXIT_INPUT, exc)


if __name__ == "__main__":
    sys.exit(main())
