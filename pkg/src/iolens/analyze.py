"""Built-in detectors: stale-offset data loss and background I/O contention."""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from typing import Any, Optional

from .errors import MalformedPattern, MalformedSpec
from .model import OPEN_KINDS, READ_KINDS, WRITE_KINDS, tag_key
from .store import AggSpec, Store

log = logging.getLogger(__name__)

DEFAULT_BUCKET_NS = 1_000_000_000
DEFAULT_K_THRESHOLD = 5
DEFAULT_DIP_THRESHOLD = 0.3


@dataclass
class DataLossFinding:
    path: str
    old_tag: dict[str, int]
    new_tag: dict[str, int]
    erroneous_offset: int
    bytes_written_to_new: int
    bytes_read_before_loss: int
    evidence: list[int] = field(default_factory=list)

    def as_dict(self) -> dict[str, Any]:
        return {"path": self.path, "old_tag": self.old_tag, "new_tag": self.new_tag,
                "erroneous_offset": self.erroneous_offset,
                "bytes_written_to_new": self.bytes_written_to_new,
                "bytes_read_before_loss": self.bytes_read_before_loss,
                "evidence": self.evidence}


@dataclass
class ContentionInterval:
    t_start: int
    t_end: int
    active_background_threads: int
    foreground_rate: float
    baseline_foreground_rate: float
    dip_fraction: float

    def as_dict(self) -> dict[str, Any]:
        return {"t_start": self.t_start, "t_end": self.t_end,
                "active_background_threads": self.active_background_threads,
                "foreground_rate": self.foreground_rate,
                "baseline_foreground_rate": self.baseline_foreground_rate,
                "dip_fraction": self.dip_fraction}


def detect_stale_offset_reads(store: Store, session: str) -> list[DataLossFinding]:
    """Find reads of a re-created file at the previous incarnation's offset.

    For each resolved path: an incarnation T1 must die (unlink), a later
    incarnation T2 must receive writes, and a reader's first read on T2 must
    land at an offset beyond everything written so far while returning zero
    bytes. Emits one finding per (new incarnation, reader).
    """
    stats = store.get_session(session).stats
    if stats.unresolved:
        log.warning("session %r has %d unresolved events; stale-offset "
                    "detection may miss findings", session, stats.unresolved)

    docs = store.iter_docs(session)
    # Timeline per resolved path, in stored (time) order.
    by_path: dict[str, list[dict]] = {}
    for doc in docs:
        enr = doc.get("enrichment")
        if enr and enr.get("tag") and enr.get("resolved_path"):
            by_path.setdefault(enr["resolved_path"], []).append(doc)
        elif doc["kind"] in ("unlink", "unlinkat") and doc["args"].get("path"):
            by_path.setdefault(doc["args"]["path"], []).append(doc)

    findings: list[DataLossFinding] = []
    for path, events in by_path.items():
        events.sort(key=lambda d: (d["t_entry"], d["_id"]))
        unlinked_tags: dict[tuple, dict] = {}   # tag key -> unlink doc
        written: dict[tuple, int] = {}          # tag key -> bytes written so far
        writes_seen: dict[tuple, list[int]] = {}
        opens_seen: dict[tuple, list[int]] = {}
        first_access_of: dict[tuple, dict[str, int]] = {}
        live_tag: Optional[tuple] = None
        # (tag, reader pid) -> [sum of prior read bytes, done flag]
        reader_state: dict[tuple, list] = {}

        for doc in events:
            kind = doc["kind"]
            if kind in ("unlink", "unlinkat"):
                if live_tag is not None:
                    unlinked_tags[live_tag] = doc
                    live_tag = None
                continue
            enr = doc["enrichment"]
            key = tag_key(enr["tag"])
            first_access_of[key] = enr["tag"]
            if kind in OPEN_KINDS:
                live_tag = key
                opens_seen.setdefault(key, []).append(doc["_id"])
                continue
            if kind in WRITE_KINDS:
                if doc["ret"] is not None and doc["ret"] > 0:
                    written[key] = written.get(key, 0) + doc["ret"]
                    writes_seen.setdefault(key, []).append(doc["_id"])
                continue
            if kind not in READ_KINDS:
                continue
            state = reader_state.setdefault((key, doc["pid"]), [0, False])
            if state[1]:
                continue
            before = enr.get("offset_before")
            w = written.get(key, 0)
            prior = [k for k in unlinked_tags if k != key and key[2] > k[2]]
            is_stale = (doc["ret"] == 0 and before is not None
                        and w > 0 and before > w and prior)
            state[1] = True  # only the first read per (incarnation, reader) counts
            if not is_stale:
                state[0] += max(doc["ret"] or 0, 0)
                continue
            old_key = max(prior, key=lambda k: k[2])
            evidence = (opens_seen.get(old_key, []) + writes_seen.get(old_key, [])
                        + [unlinked_tags[old_key]["_id"]]
                        + opens_seen.get(key, []) + writes_seen.get(key, [])
                        + [doc["_id"]])
            findings.append(DataLossFinding(
                path=path,
                old_tag=dict(first_access_of.get(old_key)
                             or {"dev": old_key[0], "ino": old_key[1],
                                 "first_access": old_key[2]}),
                new_tag=dict(enr["tag"]),
                erroneous_offset=before,
                bytes_written_to_new=w,
                bytes_read_before_loss=state[0],
                evidence=sorted(set(evidence)),
            ))
    findings.sort(key=lambda f: (f.new_tag["first_access"], f.path))
    return findings


def contention_report(store: Store, session: str,
                      bucket_ns: int = DEFAULT_BUCKET_NS,
                      background_name_pattern: str = "rocksdb:low*",
                      foreground_name_pattern: str = "db_bench*",
                      k_threshold: int = DEFAULT_K_THRESHOLD,
                      dip_threshold: float = DEFAULT_DIP_THRESHOLD,
                      ) -> list[ContentionInterval]:
    """Flag maximal intervals where many background threads do I/O while the
    foreground syscall rate dips below baseline (median across all buckets).
    """
    for pat in (background_name_pattern, foreground_name_pattern):
        if not isinstance(pat, str) or not pat:
            raise MalformedPattern("thread name pattern must be a non-empty string")
    if bucket_ns <= 0:
        raise MalformedSpec("bucket width must be positive")
    if not 0 <= dip_threshold <= 1:
        raise MalformedSpec("dip threshold must be within [0, 1]")

    rows = store.aggregate(AggSpec(session=session, group_by=["comm"],
                                   bucket_ns=bucket_ns))
    if not rows:
        return []
    fg: dict[int, int] = {}
    bg: dict[int, set[str]] = {}
    for r in rows:
        comm = r["group"]["comm"] or ""
        bucket = r["bucket"]
        if fnmatchcase(comm, foreground_name_pattern):
            fg[bucket] = fg.get(bucket, 0) + r["value"]
        if fnmatchcase(comm, background_name_pattern):
            bg.setdefault(bucket, set()).add(comm)

    lo = min(r["bucket"] for r in rows)
    hi = max(r["bucket"] for r in rows)
    buckets = range(lo, hi + bucket_ns, bucket_ns)
    baseline = statistics.median(fg.get(b, 0) for b in buckets)
    cutoff = (1 - dip_threshold) * baseline

    intervals: list[ContentionInterval] = []
    cur: Optional[list] = None  # [start, end, max_bg, fg_counts]
    for b in buckets:
        nbg = len(bg.get(b, ()))
        rate = fg.get(b, 0)
        flagged = nbg >= k_threshold and rate <= cutoff
        if flagged:
            if cur is None:
                cur = [b, b + bucket_ns, nbg, [rate]]
            else:
                cur[1] = b + bucket_ns
                cur[2] = max(cur[2], nbg)
                cur[3].append(rate)
        elif cur is not None:
            intervals.append(cur)
            cur = None
    if cur is not None:
        intervals.append(cur)

    out = []
    for start, end, nbg, rates in intervals:
        mean_rate = sum(rates) / len(rates)
        dip = 0.0 if baseline <= 0 else min(1.0, max(0.0, 1 - mean_rate / baseline))
        out.append(ContentionInterval(
            t_start=start, t_end=end, active_background_threads=nbg,
            foreground_rate=mean_rate, baseline_foreground_rate=baseline,
            dip_fraction=dip))
    return out


def session_summary(store: Store, session: str) -> dict[str, Any]:
    """Counts and pipeline stats for one session, consistent with aggregate()."""
    sess = store.get_session(session)
    per_kind: dict[str, int] = {}
    per_type: dict[str, int] = {}
    per_thread: dict[str, int] = {}
    for row in store.aggregate(AggSpec(session=session, group_by=["kind"])):
        per_kind[row["group"]["kind"]] = row["value"]
    for row in store.aggregate(AggSpec(session=session,
                                       group_by=["enrichment.file_type"])):
        key = row["group"]["enrichment.file_type"] or "unknown"
        per_type[key] = per_type.get(key, 0) + row["value"]
    for row in store.aggregate(AggSpec(session=session, group_by=["comm"])):
        per_thread[row["group"]["comm"]] = row["value"]
    stats = sess.stats
    total = stats.stored
    return {
        "session": session,
        "per_kind": per_kind,
        "per_file_type": per_type,
        "per_thread": per_thread,
        "produced": stats.produced,
        "dropped": stats.dropped,
        "stored": stats.stored,
        "unresolved": stats.unresolved,
        "fraction_unresolved": (stats.unresolved / total) if total else 0.0,
        "orphan_exits": stats.orphan_exits,
        "inconsistencies": stats.inconsistencies,
    }
