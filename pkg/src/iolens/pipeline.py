"""The ingest pipeline: capture handle -> ring buffer -> enrichment -> store.

Replay runs producer and consumer interleaved in one thread (the producer
drains before the ring would overflow, so replay never drops). Live capture
produces from its tracer thread and can drop under consumer lag; drops are
accounted by the ring and reported in session stats.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any, Optional

import msgspec

from . import correlate
from .capture import CaptureStats, ReplayCapture, encode_record
from .enrich import FdTable
from .ringbuf import RingBuffer, RingConfig
from .store import Store

_decode = msgspec.json.decode


@dataclass
class PipelineResult:
    session: str
    produced: int
    dropped: int
    stored: int
    orphan_exits: int
    inconsistencies: int
    resolution: Optional[dict[str, Any]] = None
    elapsed_s: float = 0.0

    def as_dict(self) -> dict[str, Any]:
        d = {"session": self.session, "produced": self.produced,
             "dropped": self.dropped, "stored": self.stored,
             "orphan_exits": self.orphan_exits,
             "inconsistencies": self.inconsistencies,
             "elapsed_s": self.elapsed_s}
        if self.resolution is not None:
            d["resolution"] = self.resolution
        return d


class _Consumer:
    """Drains ring lanes, enriches, and indexes in store batches."""

    def __init__(self, store: Store, session: str, batch_size: int):
        self.store = store
        self.session = session
        self.batch_size = batch_size
        self.table = FdTable()
        self.pending: list[dict[str, Any]] = []
        self.stored = 0

    def take(self, payloads: list[bytes]):
        apply = self.table.apply
        pending = self.pending
        for raw in payloads:
            rec = _decode(raw)
            fork = rec.get("fork")
            if fork is not None:
                self.table.snapshot_for_child(fork["parent"], fork["child"])
                continue
            pending.append(apply(rec))
        while len(self.pending) >= self.batch_size:
            self.flush(limit=self.batch_size)

    def flush(self, limit: Optional[int] = None):
        chunk = self.pending[:limit] if limit else self.pending
        if not chunk:
            return
        self.pending = self.pending[len(chunk):]
        self.stored += self.store.index_batch(self.session, chunk)


def run_replay(handle: ReplayCapture, store: Store, *,
               ring_config: Optional[RingConfig] = None,
               batch_size: int = 1000,
               resolve: bool = True) -> PipelineResult:
    """Ingest a replay capture into the store; optionally auto-resolve paths."""
    t0 = time.perf_counter()
    session = handle.session
    if not any(s.name == session for s in store.sessions()):
        store.create_session(session, handle.filter)
    ring = RingBuffer(ring_config or RingConfig(lanes=1))
    consumer = _Consumer(store, session, batch_size)

    for rec in handle:
        payload = encode_record(rec)
        if not ring.would_fit(0, len(payload)):
            consumer.take(ring.consume_batch(0, ring.buffered(0)))
        ring.produce(0, payload)
    while True:
        batch = ring.consume_batch(0, 10000)
        if not batch:
            break
        consumer.take(batch)
    consumer.flush()

    stats = ring.stats()
    result = _finish(store, session, handle.stats, stats.dropped,
                     consumer, resolve)
    result.elapsed_s = time.perf_counter() - t0
    return result


def run_live(handle, store: Store, *,
             ring_config: Optional[RingConfig] = None,
             batch_size: int = 1000,
             resolve: bool = True,
             poll_interval: float = 0.01) -> PipelineResult:
    """Consume a live capture until the traced process tree exits."""
    t0 = time.perf_counter()
    session = handle.session
    if not any(s.name == session for s in store.sessions()):
        store.create_session(session, handle.filter)
    ring = RingBuffer(ring_config or RingConfig())
    consumer = _Consumer(store, session, batch_size)
    handle.start(ring)
    lanes = ring.config.lanes
    try:
        while True:
            got = 0
            for lane in range(lanes):
                batch = ring.consume_batch(lane, 10000)
                got += len(batch)
                if batch:
                    consumer.take(batch)
            if got == 0:
                if handle.done():
                    break
                time.sleep(poll_interval)
        consumer.flush()
    finally:
        handle.close()
    result = _finish(store, session, handle.stats, ring.stats().dropped,
                     consumer, resolve)
    result.elapsed_s = time.perf_counter() - t0
    return result


def _finish(store: Store, session: str, cap_stats: CaptureStats,
            dropped: int, consumer: _Consumer, resolve: bool) -> PipelineResult:
    consumer.flush()
    store.update_session_stats(
        session,
        produced=cap_stats.produced,
        dropped=dropped,
        stored=consumer.stored,
        orphan_exits=cap_stats.orphan_exits,
        inconsistencies=consumer.table.inconsistencies,
    )
    resolution = None
    if resolve:
        resolution = correlate.resolve_paths(store, session).as_dict()
    return PipelineResult(
        session=session, produced=cap_stats.produced, dropped=dropped,
        stored=consumer.stored, orphan_exits=cap_stats.orphan_exits,
        inconsistencies=consumer.table.inconsistencies, resolution=resolution)
