"""Command-line entry point: record, ingest, resolve, query, report, export, serve.

Exit codes are a stable contract: 0 success (or no findings), 1 findings
exist, 2 usage/config error, 3 live capture unsupported on this platform.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Any, Optional

import msgspec

from . import analyze, correlate, pipeline
from .capture import CaptureSource, open_capture
from .config import Config, load_config
from .errors import (IolensError, MalformedInput, Unsupported, UnknownSession)
from .ringbuf import RingConfig
from .store import AggSpec, Predicate, QuerySpec, Store

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_UNSUPPORTED = 3


def _split_csv(value: Optional[str]) -> Optional[list[str]]:
    if value is None:
        return None
    return [v for v in (s.strip() for s in value.split(",")) if v]


def _split_ints(value: Optional[str]) -> Optional[list[int]]:
    parts = _split_csv(value)
    return None if parts is None else [int(p) for p in parts]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="iolens",
        description="Observe and diagnose application I/O from syscall traces.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, session_required=True):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--store", dest="store_dir",
                       help="store directory (or $IOLENS_STORE_DIR)")
        if session_required:
            p.add_argument("--session", help="session name")

    p = sub.add_parser("record", help="trace a command live and ingest its events")
    common(p)
    p.add_argument("--syscalls", help="comma-separated syscall kinds to keep")
    p.add_argument("--pids", help="comma-separated pid filter")
    p.add_argument("--tids", help="comma-separated tid filter")
    p.add_argument("--paths", help="comma-separated path-prefix filter")
    p.add_argument("--no-resolve", action="store_true",
                   help="skip automatic path correlation at session end")
    p.add_argument("command", nargs="*", help="command to spawn and trace")

    p = sub.add_parser("ingest", help="replay a recorded trace into the store")
    common(p)
    p.add_argument("trace", help="canonical JSONL trace file")
    p.add_argument("--syscalls")
    p.add_argument("--pids")
    p.add_argument("--tids")
    p.add_argument("--paths")
    p.add_argument("--no-resolve", action="store_true")

    p = sub.add_parser("resolve", help="run file-path correlation for a session")
    common(p)

    p = sub.add_parser("query", help="print matching events as a table")
    common(p)
    p.add_argument("--syscalls", help="filter by kinds")
    p.add_argument("--pids")
    p.add_argument("--tids")
    p.add_argument("--path-prefix", help="filter by resolved/argument path prefix")
    p.add_argument("--limit", type=int, default=50)
    p.add_argument("--offset", type=int, default=0)
    p.add_argument("--format", choices=("table", "jsonl"), default="table")

    p = sub.add_parser("report", help="run a detector and print findings")
    common(p)
    p.add_argument("detector", help="stale-offset | contention")
    p.add_argument("--bucket", type=float, default=1.0,
                   help="bucket width in seconds (contention)")
    p.add_argument("--k-threshold", type=int, default=analyze.DEFAULT_K_THRESHOLD)
    p.add_argument("--dip-threshold", type=float,
                   default=analyze.DEFAULT_DIP_THRESHOLD)
    p.add_argument("--background", default="rocksdb:low*",
                   help="background thread-name glob")
    p.add_argument("--foreground", default="db_bench*",
                   help="foreground thread-name glob")
    p.add_argument("--format", choices=("table", "jsonl"), default="table")

    p = sub.add_parser("export", help="write a session back out as JSONL or CSV")
    common(p)
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--bucket", type=float, default=1.0,
                   help="bucket width in seconds for csv aggregate")
    p.add_argument("-o", "--output", help="output file (default stdout)")

    p = sub.add_parser("serve", help="start the HTTP API (and dashboard, if built)")
    common(p, session_required=False)
    p.add_argument("--port", type=int)
    p.add_argument("--host")
    return ap


def _config_from_args(args) -> Config:
    overrides: dict[str, Any] = {"store_dir": getattr(args, "store_dir", None)}
    for attr in ("session", "syscalls", "pids", "tids", "paths"):
        if hasattr(args, attr):
            val = getattr(args, attr)
            if attr == "session":
                overrides["session"] = val
            elif val is not None:
                overrides[attr] = (_split_ints(val) if attr in ("pids", "tids")
                                   else _split_csv(val))
    if getattr(args, "host", None):
        overrides["serve_host"] = args.host
    if getattr(args, "port", None):
        overrides["serve_port"] = args.port
    return load_config(args.config, overrides)


def _fmt_ns(t: Optional[int]) -> str:
    return "-" if t is None else f"{t / 1e9:.6f}"


_TABLE_FMT = "{:>14}  {:<16} {:>6}/{:<6} {:<10} {:<28} {:>9} {:>7} {:>6}"


def print_event_table(docs, out=None):
    out = out or sys.stdout
    print(_TABLE_FMT.format("TIME(s)", "COMM", "PID", "TID", "KIND",
                            "PATH/FD", "OFFSET", "BYTES", "RET"), file=out)
    for d in docs:
        e = d.get("enrichment") or {}
        path = (e.get("resolved_path") or d["args"].get("path")
                or (f"fd={d['args']['fd']}" if d["args"].get("fd") is not None else "-"))
        off = e.get("offset_before")
        data_bytes = d["ret"] if (d["ret"] is not None and d["ret"] >= 0
                                  and "count" in d["args"]) else None
        print(_TABLE_FMT.format(
            _fmt_ns(d["t_entry"]), d["comm"][:16], d["pid"], d["tid"], d["kind"],
            str(path)[:28], "-" if off is None else off,
            "-" if data_bytes is None else data_bytes,
            "-" if d["ret"] is None else d["ret"]), file=out)


def _print_summary(result: pipeline.PipelineResult):
    r = result.as_dict()
    line = (f"session={r['session']} produced={r['produced']} "
            f"stored={r['stored']} dropped={r['dropped']} "
            f"orphan_exits={r['orphan_exits']} "
            f"inconsistencies={r['inconsistencies']}")
    if result.resolution:
        res = result.resolution
        line += (f" resolved={res['resolved']} unresolved={res['unresolved']}"
                 f" ({res['fraction_unresolved']:.1%} unresolved)")
    print(line)


def cmd_record(args) -> int:
    cfg = _config_from_args(args)
    command = args.command or cfg.record_command
    if not command:
        print("record: no command given (positional args or [record].command)",
              file=sys.stderr)
        return EXIT_USAGE
    session = cfg.session or f"record-{os.getpid()}"
    store = Store(cfg.store_dir)
    try:
        handle = open_capture(CaptureSource(
            session=session, filter=cfg.filter_spec(), command=command))
    except Unsupported as e:
        print(f"record: live capture unsupported: {e}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    lanes = cfg.ring_lanes or os.cpu_count() or 1
    result = pipeline.run_live(
        handle, store,
        ring_config=RingConfig(lanes=lanes,
                               capacity_bytes_per_lane=cfg.ring_capacity_bytes),
        batch_size=cfg.store_batch_size, resolve=not args.no_resolve)
    _print_summary(result)
    return EXIT_OK


def cmd_ingest(args) -> int:
    cfg = _config_from_args(args)
    session = cfg.session
    if not session:
        base = os.path.basename(args.trace)
        session = base.rsplit(".", 1)[0] or base
    if not os.path.exists(args.trace):
        print(f"ingest: no such trace file: {args.trace}", file=sys.stderr)
        return EXIT_USAGE
    store = Store(cfg.store_dir)
    handle = open_capture(CaptureSource(
        session=session, filter=cfg.filter_spec(), replay_path=args.trace))
    result = pipeline.run_replay(
        handle, store,
        ring_config=RingConfig(lanes=1,
                               capacity_bytes_per_lane=cfg.ring_capacity_bytes),
        batch_size=cfg.store_batch_size, resolve=not args.no_resolve)
    _print_summary(result)
    return EXIT_OK


def cmd_resolve(args) -> int:
    cfg = _config_from_args(args)
    if not cfg.session:
        print("resolve: --session is required", file=sys.stderr)
        return EXIT_USAGE
    store = Store(cfg.store_dir)
    rep = correlate.resolve_paths(store, cfg.session)
    print(f"session={cfg.session} resolved={rep.resolved} "
          f"unresolved={rep.unresolved} conflicts={rep.conflicts} "
          f"({rep.fraction_unresolved:.1%} unresolved)")
    return EXIT_OK


def _query_spec(args, cfg) -> QuerySpec:
    match = []
    if cfg.syscalls:
        match.append(Predicate("kind", "in", cfg.syscalls))
    if cfg.pids:
        match.append(Predicate("pid", "in", cfg.pids))
    if cfg.tids:
        match.append(Predicate("tid", "in", cfg.tids))
    if getattr(args, "path_prefix", None):
        match.append(Predicate("enrichment.resolved_path", "prefix", args.path_prefix))
    return QuerySpec(session=cfg.session, match=match, sort=("t_entry", "asc"),
                     limit=args.limit, offset=args.offset)


def cmd_query(args) -> int:
    cfg = _config_from_args(args)
    if not cfg.session:
        print("query: --session is required", file=sys.stderr)
        return EXIT_USAGE
    store = Store(cfg.store_dir)
    docs = store.query(_query_spec(args, cfg))
    if args.format == "jsonl":
        for d in docs:
            sys.stdout.write(msgspec.json.encode(
                {k: v for k, v in d.items() if k != "_id"}).decode() + "\n")
    else:
        print_event_table(docs)
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _config_from_args(args)
    if not cfg.session:
        print("report: --session is required", file=sys.stderr)
        return EXIT_USAGE
    store = Store(cfg.store_dir)
    if args.detector == "stale-offset":
        findings = [f.as_dict() for f in
                    analyze.detect_stale_offset_reads(store, cfg.session)]
        headers = ("PATH", "OLD TAG", "NEW TAG", "ERR OFFSET", "NEW BYTES", "EVIDENCE")
        rows = [(f["path"],
                 f"ino {f['old_tag']['ino']}@{f['old_tag']['first_access']}",
                 f"ino {f['new_tag']['ino']}@{f['new_tag']['first_access']}",
                 f["erroneous_offset"], f["bytes_written_to_new"],
                 ",".join(map(str, f["evidence"][:8])))
                for f in findings]
    elif args.detector == "contention":
        findings = [iv.as_dict() for iv in analyze.contention_report(
            store, cfg.session, bucket_ns=int(args.bucket * 1e9),
            background_name_pattern=args.background,
            foreground_name_pattern=args.foreground,
            k_threshold=args.k_threshold, dip_threshold=args.dip_threshold)]
        headers = ("START(s)", "END(s)", "BG THREADS", "FG RATE", "BASELINE", "DIP")
        rows = [(f"{f['t_start'] / 1e9:.0f}", f"{f['t_end'] / 1e9:.0f}",
                 f["active_background_threads"], f"{f['foreground_rate']:.1f}",
                 f"{f['baseline_foreground_rate']:.1f}",
                 f"{f['dip_fraction']:.2f}") for f in findings]
    else:
        print(f"report: unknown detector {args.detector!r} "
              "(expected stale-offset or contention)", file=sys.stderr)
        return EXIT_USAGE
    if args.format == "jsonl":
        for f in findings:
            sys.stdout.write(msgspec.json.encode(f).decode() + "\n")
    elif not findings:
        print("no findings")
    else:
        widths = [max(len(str(h)), *(len(str(r[i])) for r in rows))
                  for i, h in enumerate(headers)]
        fmt = "  ".join("{:<%d}" % w for w in widths)
        print(fmt.format(*headers))
        for r in rows:
            print(fmt.format(*r))
    return EXIT_FINDINGS if findings else EXIT_OK


def cmd_export(args) -> int:
    cfg = _config_from_args(args)
    if not cfg.session:
        print("export: --session is required", file=sys.stderr)
        return EXIT_USAGE
    store = Store(cfg.store_dir)
    out = open(args.output, "wb") if args.output else sys.stdout.buffer
    try:
        if args.format == "jsonl":
            store.export_events(cfg.session, out)
        else:
            rows = store.aggregate(AggSpec(
                session=cfg.session, group_by=["comm", "kind"],
                bucket_ns=int(args.bucket * 1e9)))
            out.write(b"comm,kind,bucket_ns,count\n")
            for r in rows:
                out.write((f"{r['group']['comm']},{r['group']['kind']},"
                           f"{r['bucket']},{r['value']}\n").encode())
    finally:
        if args.output:
            out.close()
    return EXIT_OK


def cmd_serve(args) -> int:
    cfg = _config_from_args(args)
    import uvicorn

    from .api import create_app
    dashboard = os.environ.get("IOLENS_DASHBOARD_DIR", "frontend/dist")
    app = create_app(cfg.store_dir, refresh_interval=cfg.serve_refresh_interval_s,
                     cors_origins=cfg.serve_cors_origins,
                     dashboard_dir=dashboard if os.path.isdir(dashboard) else None)
    try:
        uvicorn.run(app, host=cfg.serve_host, port=cfg.serve_port,
                    log_level="warning")
    except SystemExit as e:  # uvicorn exits 1 on bind failure
        return int(e.code or 1)
    return EXIT_OK


_COMMANDS = {
    "record": cmd_record,
    "ingest": cmd_ingest,
    "resolve": cmd_resolve,
    "query": cmd_query,
    "report": cmd_report,
    "export": cmd_export,
    "serve": cmd_serve,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.cmd](args)
    except FileNotFoundError as e:
        print(f"{args.cmd}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MalformedInput as e:
        print(f"{args.cmd}: malformed input at {e}", file=sys.stderr)
        return EXIT_USAGE
    except UnknownSession as e:
        print(f"{args.cmd}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Unsupported as e:
        print(f"{args.cmd}: {e}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except IolensError as e:
        print(f"{args.cmd}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
