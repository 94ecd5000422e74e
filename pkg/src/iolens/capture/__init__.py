"""Event capture: replay of recorded traces and the live-tracing contract.

A capture handle yields aggregated records that are already entry/exit
paired, filtered, and stamped with per-lane sequence numbers. Replay works
everywhere; live capture is a Linux plugin (see ``iolens.capture.live``).
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Optional

import msgspec

from ..errors import MalformedInput, NotInCatalog, Unsupported
from ..model import OPEN_KINDS, FilterSpec, validate_record

_decode = msgspec.json.decode
encode_record = msgspec.json.encode


@dataclass
class CaptureStats:
    parsed: int = 0
    produced: int = 0
    filtered_out: int = 0
    orphan_exits: int = 0

    def as_dict(self) -> dict[str, int]:
        return {"parsed": self.parsed, "produced": self.produced,
                "filtered_out": self.filtered_out, "orphan_exits": self.orphan_exits}


@dataclass
class CaptureSource:
    """What to capture: a recorded stream (replay) or a command/pids (live)."""

    session: str
    filter: FilterSpec = field(default_factory=FilterSpec)
    replay_path: Optional[str] = None
    replay_stream: Optional[io.IOBase] = None
    command: Optional[list[str]] = None
    pids: Optional[list[int]] = None

    @property
    def mode(self) -> str:
        if self.replay_path is not None or self.replay_stream is not None:
            return "replay"
        return "live"


def match_filter(rec: dict[str, Any], spec: FilterSpec,
                 fd_paths: Optional[dict[tuple[int, int], str]] = None) -> bool:
    """True iff every present filter dimension matches the record.

    The path dimension checks the record's own path argument when present,
    falling back to the fd's last-known path; records with no knowable path
    match only when no path filter is set.
    """
    if spec.kinds is not None and rec["kind"] not in spec.kinds:
        return False
    if spec.pids is not None and rec["pid"] not in spec.pids:
        return False
    if spec.tids is not None and rec["tid"] not in spec.tids:
        return False
    if spec.path_prefixes is not None:
        path = rec["args"].get("path")
        if path is None and fd_paths is not None:
            fd = rec["args"].get("fd")
            if fd is not None:
                path = fd_paths.get((rec["pid"], fd))
        if path is None:
            return False
        if not any(path.startswith(p) for p in spec.path_prefixes):
            return False
    return True


class HalfEventPairer:
    """Merge entry/exit half-events into aggregated records.

    An exit matches the most recent unmatched entry of the same kind on the
    same tid. Exits with no pending entry are counted and skipped.
    """

    def __init__(self):
        self._pending: dict[tuple[int, str], list[dict]] = {}
        self.orphan_exits = 0

    def push(self, half: dict[str, Any]) -> Optional[dict[str, Any]]:
        """Feed one half-event; returns an aggregated record when one completes."""
        key = (half["tid"], half["kind"])
        if half.pop("dir") == "entry":
            self._pending.setdefault(key, []).append(half)
            return None
        stack = self._pending.get(key)
        if not stack:
            self.orphan_exits += 1
            return None
        rec = stack.pop()
        if not stack:
            del self._pending[key]
        rec["ret"] = half.get("ret")
        rec["t_exit"] = half.get("t_exit")
        return rec

    def finish(self) -> list[dict[str, Any]]:
        """Flush unmatched entries (unknown exit/ret), ordered by entry time."""
        out = [rec for stack in self._pending.values() for rec in stack]
        for rec in out:
            rec.setdefault("ret", None)
            rec.setdefault("t_exit", None)
        out.sort(key=lambda r: (r["t_entry"], r["tid"]))
        self._pending.clear()
        return out


class ReplayCapture:
    """Capture handle over a recorded JSONL trace.

    ``next_batch`` yields validated, paired, filtered records with ``seq``
    assigned in production order (single replay lane). Fork-declaration
    control lines ({"fork": {...}}) are passed through untouched.
    """

    lanes = 1

    def __init__(self, source: CaptureSource):
        self.source = source
        self.session = source.session
        self.filter = source.filter
        self.stats = CaptureStats()
        self._stream = (open(source.replay_path, "rb")
                        if source.replay_path is not None else source.replay_stream)
        self._owns_stream = source.replay_path is not None
        self._fd_paths: dict[tuple[int, int], str] = {}
        self._pairer = HalfEventPairer()
        self._seq = 0
        self._match_all = source.filter.is_match_all()
        self._iter = self._events()

    def _emit(self, rec: dict[str, Any]) -> Optional[dict[str, Any]]:
        """Filter an aggregated record, track fd→path, stamp session/seq."""
        self.stats.parsed += 1
        if self._match_all:
            matched = True
        else:
            matched = match_filter(rec, self.filter, self._fd_paths)
            kind, args, ret = rec["kind"], rec["args"], rec["ret"]
            if kind in OPEN_KINDS and ret is not None and ret >= 0 and args.get("path"):
                self._fd_paths[(rec["pid"], ret)] = args["path"]
            elif kind == "close" and ret == 0:
                self._fd_paths.pop((rec["pid"], args.get("fd")), None)
        if not matched:
            self.stats.filtered_out += 1
            return None
        rec["session"] = self.session
        rec["seq"] = self._seq
        self._seq += 1
        self.stats.produced += 1
        return rec

    def _events(self) -> Iterator[dict[str, Any]]:
        for line_no, raw in enumerate(self._stream, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = _decode(raw)
            except msgspec.DecodeError as e:
                raise MalformedInput(line_no, f"invalid JSON: {e}")
            if not isinstance(obj, dict):
                raise MalformedInput(line_no, "record is not a JSON object")
            if "fork" in obj:
                yield obj  # control record: parent/child fd-table relation
                continue
            try:
                direction = obj.get("dir")
                if direction is None:
                    rec = validate_record(obj)
                elif direction == "entry":
                    rec = self._pairer.push(validate_record(obj))
                elif direction == "exit":
                    rec = self._pairer.push(
                        {"dir": "exit", "tid": obj["tid"], "kind": obj["kind"],
                         "ret": obj.get("ret"), "t_exit": obj.get("t_exit")})
                else:
                    raise ValueError(f"bad 'dir' value {direction!r}")
            except (NotInCatalog, ValueError, KeyError, TypeError) as e:
                raise MalformedInput(line_no, str(e))
            if rec is None:
                continue
            out = self._emit(rec)
            if out is not None:
                yield out
        self.stats.orphan_exits = self._pairer.orphan_exits
        for rec in self._pairer.finish():
            out = self._emit(rec)
            if out is not None:
                yield out

    def next_batch(self, max_records: int = 1000) -> list[dict[str, Any]]:
        batch: list[dict[str, Any]] = []
        for rec in self._iter:
            batch.append(rec)
            if len(batch) >= max_records:
                break
        if not batch:
            self.close()
        return batch

    def __iter__(self) -> Iterator[dict[str, Any]]:
        return self._iter

    def close(self):
        if self._owns_stream and self._stream is not None:
            self._stream.close()
            self._stream = None
            self._owns_stream = False


def open_capture(source: CaptureSource):
    """Open a capture handle for the given source.

    Replay works on every platform; live mode requires the Linux backend and
    raises Unsupported elsewhere.
    """
    if source.mode == "replay":
        return ReplayCapture(source)
    from . import live
    return live.open_live(source)


def spawn_and_trace(command: list[str], filter: FilterSpec, session: str,
                    **kwargs):
    """Trace a spawned command and all its descendants (live mode only)."""
    src = CaptureSource(session=session, filter=filter, command=command)
    return open_capture(src)
