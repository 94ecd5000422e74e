"""Embedded event store: append-only JSONL segments + in-memory field indexes.

One directory per session under ``<root>/sessions/``; events and enrichment
updates are append-only logs, session metadata is a small JSON file. A
single writer (the pipeline) and many readers are supported; a reader in
another process picks up appended data via :meth:`Store.refresh`.
"""

from __future__ import annotations

import errno
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

import msgspec

from .errors import (ImmutableField, MalformedSpec, StorageFull, UnknownSession)
from .model import FilterSpec, Session, SessionStats

_encode = msgspec.json.encode
_decode = msgspec.json.decode

_MISSING = object()


def get_field(doc: dict[str, Any], path: str) -> Any:
    """Resolve a dotted field path; returns _MISSING sentinel when absent."""
    cur: Any = doc
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return _MISSING
        cur = cur[part]
    return cur


@dataclass
class Predicate:
    field: str
    op: str  # eq | in | prefix | range
    value: Any = None
    lo: Optional[float] = None
    hi: Optional[float] = None


@dataclass
class QuerySpec:
    session: str
    match: list[Predicate] = field(default_factory=list)
    time_range: Optional[tuple[int, int]] = None  # [t0, t1) on t_entry
    sort: Optional[tuple[str, str]] = None  # (field, "asc"|"desc")
    limit: Optional[int] = None
    offset: int = 0


@dataclass
class AggSpec:
    session: str
    group_by: list[str] = field(default_factory=list)
    bucket_ns: Optional[int] = None
    metric: str = "count"  # count | sum | percentile
    metric_field: Optional[str] = None
    percentile: Optional[float] = None
    top_n: Optional[int] = None
    match: list[Predicate] = field(default_factory=list)
    time_range: Optional[tuple[int, int]] = None


def _validate_predicates(match: list[Predicate]):
    for p in match:
        if p.op not in ("eq", "in", "prefix", "range"):
            raise MalformedSpec(f"unknown predicate op {p.op!r}")
        if p.op == "range" and p.lo is not None and p.hi is not None and p.lo > p.hi:
            raise MalformedSpec(f"bad range on {p.field}: lo > hi")
        if p.op == "in" and not isinstance(p.value, (list, tuple, set, frozenset)):
            raise MalformedSpec("in-set predicate needs a list of values")


def _validate_time_range(tr):
    if tr is not None and tr[1] < tr[0]:
        raise MalformedSpec("time_range end before start")


class _SessionData:
    """In-memory view of one session: docs, indexes, and load offsets."""

    def __init__(self, sdir: Path):
        self.dir = sdir
        self.docs: list[dict[str, Any]] = []
        self.indexes: dict[str, dict[Any, list[int]]] = {}
        self.events_offset = 0   # bytes of events.jsonl already loaded
        self.updates_offset = 0
        self.meta: Session | None = None
        self.resolve_lock = threading.RLock()  # reentrant: API 409 check wraps resolve

    # -- indexing ----------------------------------------------------------

    # Maintained incrementally at index time; everything else is built
    # lazily on first equality query and invalidated by new batches.
    _EAGER = ("kind", "comm", "pid", "tid", "session", "dev", "ino", "mode")
    _EAGER_ARGS = ("fd", "path")
    _EAGER_SET = frozenset(_EAGER) | frozenset("args." + a for a in _EAGER_ARGS)

    def _index_doc(self, doc: dict[str, Any], doc_id: int):
        idxs = self.indexes
        for key in self._EAGER:
            val = doc.get(key)
            if val is None:
                continue
            idx = idxs.get(key)
            if idx is None:
                idx = idxs[key] = {}
            lst = idx.get(val)
            if lst is None:
                idx[val] = [doc_id]
            else:
                lst.append(doc_id)
        args = doc.get("args")
        if args:
            for ak in self._EAGER_ARGS:
                val = args.get(ak)
                if val is None:
                    continue
                fp = "args." + ak
                idx = idxs.get(fp)
                if idx is None:
                    idx = idxs[fp] = {}
                lst = idx.get(val)
                if lst is None:
                    idx[val] = [doc_id]
                else:
                    lst.append(doc_id)

    def add_docs(self, docs: Iterable[dict[str, Any]]):
        base = len(self.docs)
        append = self.docs.append
        index_doc = self._index_doc
        for i, doc in enumerate(docs):
            doc["_id"] = base + i
            append(doc)
            index_doc(doc, base + i)
        for fp in list(self.indexes):  # lazy indexes don't cover the new docs
            if fp not in self._EAGER_SET:
                del self.indexes[fp]

    def invalidate_index(self, field_path: str):
        self.indexes.pop(field_path, None)

    def ensure_index(self, field_path: str) -> dict[Any, list[int]]:
        """Equality index over a dotted field path, built on demand."""
        idx = self.indexes.get(field_path)
        if idx is None:
            idx = {}
            for i, doc in enumerate(self.docs):
                v = get_field(doc, field_path)
                if v is _MISSING or not isinstance(v, (str, int, bool)):
                    continue
                idx.setdefault(v, []).append(i)
            self.indexes[field_path] = idx
        return idx


class Store:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, _SessionData] = {}
        self._lock = threading.RLock()
        self._load_all()

    # -- session lifecycle ---------------------------------------------------

    def _session_dir(self, name: str) -> Path:
        return self.root / "sessions" / name

    def _load_all(self):
        for sdir in sorted((self.root / "sessions").iterdir()):
            if sdir.is_dir() and (sdir / "meta.json").exists():
                self._load_session(sdir.name)

    def _load_session(self, name: str):
        sd = self._sessions.get(name)
        if sd is None:
            sd = self._sessions[name] = _SessionData(self._session_dir(name))
        meta = _decode((sd.dir / "meta.json").read_bytes())
        sd.meta = Session(
            name=meta["name"], created_at=meta["created_at"],
            filter=FilterSpec.from_dict(meta.get("filter")),
            stats=SessionStats.from_dict(meta.get("stats", {})))
        self._load_tail(sd)

    def _load_tail(self, sd: _SessionData):
        ev = sd.dir / "events.jsonl"
        if ev.exists():
            size = ev.stat().st_size
            if size > sd.events_offset:
                with open(ev, "rb") as f:
                    f.seek(sd.events_offset)
                    new = [_decode(line) for line in f if line.strip()]
                    sd.events_offset = f.tell()
                sd.add_docs(new)
        up = sd.dir / "updates.jsonl"
        if up.exists():
            size = up.stat().st_size
            if size > sd.updates_offset:
                with open(up, "rb") as f:
                    f.seek(sd.updates_offset)
                    for line in f:
                        if line.strip():
                            self._apply_update(sd, _decode(line))
                    sd.updates_offset = f.tell()

    def refresh(self):
        """Pick up sessions/events appended by another process."""
        with self._lock:
            for sdir in sorted((self.root / "sessions").iterdir()):
                if not sdir.is_dir() or not (sdir / "meta.json").exists():
                    continue
                if sdir.name not in self._sessions:
                    self._load_session(sdir.name)
                else:
                    sd = self._sessions[sdir.name]
                    meta = _decode((sdir / "meta.json").read_bytes())
                    sd.meta.stats = SessionStats.from_dict(meta.get("stats", {}))
                    self._load_tail(sd)

    def create_session(self, name: str, filter_spec: FilterSpec | None = None,
                       created_at: float | None = None) -> Session:
        with self._lock:
            if name in self._sessions:
                raise ValueError(f"session {name!r} already exists")
            sdir = self._session_dir(name)
            sdir.mkdir(parents=True, exist_ok=True)
            sess = Session(name=name, created_at=created_at or time.time(),
                           filter=filter_spec or FilterSpec())
            sd = _SessionData(sdir)
            sd.meta = sess
            self._sessions[name] = sd
            self._write_meta(sd)
            return sess

    def _write_meta(self, sd: _SessionData):
        m = sd.meta
        payload = _encode({"name": m.name, "created_at": m.created_at,
                           "filter": m.filter.as_dict(), "stats": m.stats.as_dict()})
        (sd.dir / "meta.json").write_bytes(payload)

    def _get(self, name: str) -> _SessionData:
        sd = self._sessions.get(name)
        if sd is None:
            raise UnknownSession(f"no session named {name!r}")
        return sd

    def get_session(self, name: str) -> Session:
        return self._get(name).meta

    def sessions(self) -> list[Session]:
        return [sd.meta for _, sd in sorted(self._sessions.items())]

    def update_session_stats(self, name: str, **deltas: int) -> SessionStats:
        """Set absolute values for the given stats fields and persist."""
        sd = self._get(name)
        for k, v in deltas.items():
            setattr(sd.meta.stats, k, v)
        self._write_meta(sd)
        return sd.meta.stats

    # -- writes ----------------------------------------------------------------

    def index_batch(self, session: str, records: list[dict[str, Any]]) -> int:
        """Append a batch of event records; returns the count indexed."""
        sd = self._get(session)
        if not records:
            return 0
        try:
            payload = b"\n".join(map(_encode, records)) + b"\n"
            with open(sd.dir / "events.jsonl", "ab") as f:
                f.write(payload)
                f.flush()
                sd.events_offset = f.tell()
        except OSError as e:
            if e.errno == errno.ENOSPC:
                raise StorageFull(str(e)) from e
            raise
        sd.add_docs(records)
        sd.meta.stats.stored += len(records)
        self._write_meta(sd)
        return len(records)

    def _apply_update(self, sd: _SessionData, upd: dict[str, Any]):
        path = upd["field"].split(".")
        value = upd["value"]
        for doc_id in upd["ids"]:
            cur = sd.docs[doc_id]
            for part in path[:-1]:
                nxt = cur.get(part)
                if not isinstance(nxt, dict):
                    nxt = cur[part] = {}
                cur = nxt
            cur[path[-1]] = value
        sd.invalidate_index(upd["field"])

    def update_field(self, spec: QuerySpec, field_path: str, value: Any) -> int:
        """Set an enrichment field on every event matching the spec."""
        if field_path != "enrichment" and not field_path.startswith("enrichment."):
            raise ImmutableField(f"{field_path!r} is not an enrichment field")
        docs = self.query(spec, _paginate=False)
        ids = [d["_id"] for d in docs]
        if ids:
            self.apply_updates(spec.session, [(field_path, value, ids)])
        return len(ids)

    def apply_updates(self, session: str,
                      updates: list[tuple[str, Any, list[int]]]):
        """Bulk enrichment updates: [(field_path, value, doc_ids)], logged once each."""
        sd = self._get(session)
        with open(sd.dir / "updates.jsonl", "ab") as f:
            for field_path, value, ids in updates:
                upd = {"field": field_path, "value": value, "ids": ids}
                f.write(_encode(upd))
                f.write(b"\n")
                self._apply_update(sd, upd)
            f.flush()
            sd.updates_offset = f.tell()

    # -- reads -------------------------------------------------------------------

    def iter_docs(self, session: str) -> list[dict[str, Any]]:
        """All docs of a session, in insertion order (not copies)."""
        return self._get(session).docs

    _SCALAR = (str, int, bool)

    def _candidates(self, sd: _SessionData, match: list[Predicate]) -> list[int]:
        """Narrow doc ids via the best equality index; may overselect."""
        best: Optional[list[int]] = None
        for p in match:
            if p.op not in ("eq", "in"):
                continue
            if p.op == "eq" and not isinstance(p.value, self._SCALAR):
                continue  # non-scalar equality (e.g. tag dicts) scans instead
            if p.op == "in" and any(not isinstance(v, self._SCALAR) for v in p.value):
                continue  # mixed-type set: cannot narrow soundly
            idx = sd.indexes.get(p.field)
            if idx is None:
                idx = sd.ensure_index(p.field)
            if p.op == "eq":
                ids = idx.get(p.value, [])
            else:
                ids = sorted({i for v in p.value for i in idx.get(v, [])})
            if best is None or len(ids) < len(best):
                best = ids
        if best is None:
            return list(range(len(sd.docs)))
        return best

    @staticmethod
    def _matches(doc: dict[str, Any], match: list[Predicate],
                 time_range: Optional[tuple[int, int]]) -> bool:
        if time_range is not None:
            t = doc.get("t_entry")
            if t is None or not (time_range[0] <= t < time_range[1]):
                return False
        for p in match:
            v = get_field(doc, p.field)
            if v is _MISSING:
                return False
            if p.op == "eq":
                if v != p.value:
                    return False
            elif p.op == "in":
                if v not in p.value:
                    return False
            elif p.op == "prefix":
                if not isinstance(v, str) or not v.startswith(p.value):
                    return False
            else:  # range
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    return False
                if p.lo is not None and v < p.lo:
                    return False
                if p.hi is not None and v > p.hi:
                    return False
        return True

    def query(self, spec: QuerySpec, _paginate: bool = True) -> list[dict[str, Any]]:
        """Events matching all predicates, deterministically ordered."""
        _validate_predicates(spec.match)
        _validate_time_range(spec.time_range)
        if spec.limit is not None and spec.limit < 0:
            raise MalformedSpec("negative limit")
        if spec.offset < 0:
            raise MalformedSpec("negative offset")
        sd = self._get(spec.session)
        docs = sd.docs
        hits = [docs[i] for i in self._candidates(sd, spec.match)
                if self._matches(docs[i], spec.match, spec.time_range)]
        if spec.sort is not None:
            fld, direction = spec.sort
            if direction not in ("asc", "desc"):
                raise MalformedSpec(f"bad sort direction {direction!r}")
            missing = _MISSING

            def key(d):
                v = get_field(d, fld)
                # sort None/missing first; ties broken by (seq, _id)
                return ((v is missing or v is None, v),
                        d.get("seq", 0), d["_id"])

            try:
                hits.sort(key=key, reverse=(direction == "desc"))
            except TypeError:
                hits.sort(key=lambda d: (str(get_field(d, fld)), d.get("seq", 0), d["_id"]),
                          reverse=(direction == "desc"))
        else:
            hits.sort(key=lambda d: (d["t_entry"], d.get("seq", 0), d["_id"]))
        if _paginate:
            start = spec.offset
            end = start + spec.limit if spec.limit is not None else None
            hits = hits[start:end]
        return hits

    def aggregate(self, spec: AggSpec) -> list[dict[str, Any]]:
        """Grouped/bucketed metric rows: {group, bucket, value}."""
        _validate_predicates(spec.match)
        _validate_time_range(spec.time_range)
        if spec.bucket_ns is not None and spec.bucket_ns <= 0:
            raise MalformedSpec("bucket width must be positive")
        if spec.metric not in ("count", "sum", "percentile"):
            raise MalformedSpec(f"unknown metric {spec.metric!r}")
        if spec.metric in ("sum", "percentile") and not spec.metric_field:
            raise MalformedSpec(f"metric {spec.metric!r} needs a field")
        if spec.metric == "percentile":
            p = spec.percentile
            if p is None or not (0 < p <= 100):
                raise MalformedSpec("percentile must be in (0, 100]")
        sd = self._get(spec.session)
        groups: dict[tuple, Any] = {}
        width = spec.bucket_ns
        for i in self._candidates(sd, spec.match):
            doc = sd.docs[i]
            if not self._matches(doc, spec.match, spec.time_range):
                continue
            gkey = tuple(
                (None if (v := get_field(doc, g)) is _MISSING else v)
                for g in spec.group_by)
            bucket = (doc["t_entry"] // width) * width if width else None
            full = (gkey, bucket)
            if spec.metric == "count":
                groups[full] = groups.get(full, 0) + 1
            else:
                v = get_field(doc, spec.metric_field)
                if v is _MISSING or not isinstance(v, (int, float)) or isinstance(v, bool):
                    continue
                if spec.metric == "sum":
                    groups[full] = groups.get(full, 0) + v
                else:
                    groups.setdefault(full, []).append(v)
        rows = []
        for (gkey, bucket), acc in groups.items():
            if spec.metric == "percentile":
                acc.sort()
                rank = max(1, math.ceil(spec.percentile / 100 * len(acc)))
                value = acc[rank - 1]
            else:
                value = acc
            rows.append({"group": dict(zip(spec.group_by, gkey)),
                         "bucket": bucket, "value": value})
        rows.sort(key=lambda r: (tuple(str(v) for v in r["group"].values()),
                                 r["bucket"] if r["bucket"] is not None else -1))
        if spec.top_n is not None:
            totals: dict[tuple, float] = {}
            for r in rows:
                k = tuple(r["group"].values())
                totals[k] = totals.get(k, 0) + (r["value"] if isinstance(r["value"], (int, float)) else 0)
            keep = set(sorted(totals, key=lambda k: (-totals[k], tuple(str(v) for v in k)))[:spec.top_n])
            rows = [r for r in rows if tuple(r["group"].values()) in keep]
        return rows

    # -- export --------------------------------------------------------------------

    def export_events(self, session: str, out) -> int:
        """Write canonical JSONL (without internal _id) to a binary stream."""
        n = 0
        for doc in self.iter_docs(session):
            rec = {k: v for k, v in doc.items() if k != "_id"}
            out.write(_encode(rec))
            out.write(b"\n")
            n += 1
        return n

    def resolve_lock(self, session: str) -> threading.Lock:
        return self._get(session).resolve_lock

    def close(self):
        self._sessions.clear()
