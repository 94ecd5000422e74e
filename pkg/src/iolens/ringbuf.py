"""Per-lane bounded ring buffers with exact drop accounting.

Each lane is a single-producer/single-consumer FIFO of length-prefixed byte
records. A producer that finds its lane full drops the incoming record
(drop-newest) and never blocks.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field

from .errors import LaneOutOfRange

DEFAULT_CAPACITY = 256 * 1024 * 1024  # per lane
LEN_PREFIX = 4  # accounted per record, mirroring a length-prefixed byte ring


@dataclass(frozen=True)
class RingConfig:
    lanes: int = 1
    capacity_bytes_per_lane: int = DEFAULT_CAPACITY
    drop_policy: str = "drop-newest"  # fixed; documented for config readers

    def __post_init__(self):
        if self.lanes < 1:
            raise ValueError("lanes must be positive")
        if self.capacity_bytes_per_lane < 1:
            raise ValueError("capacity_bytes_per_lane must be positive")
        if self.drop_policy != "drop-newest":
            raise ValueError("only drop-newest is supported")


@dataclass
class LaneStats:
    produced: int = 0
    consumed: int = 0
    dropped: int = 0
    buffered: int = 0

    def as_dict(self) -> dict[str, int]:
        return {"produced": self.produced, "consumed": self.consumed,
                "dropped": self.dropped, "buffered": self.buffered}


@dataclass
class RingStats:
    produced: int = 0
    consumed: int = 0
    dropped: int = 0
    buffered: int = 0
    per_lane: list[LaneStats] = field(default_factory=list)

    def as_dict(self) -> dict:
        d = {"produced": self.produced, "consumed": self.consumed,
             "dropped": self.dropped, "buffered": self.buffered}
        d["per_lane"] = [s.as_dict() for s in self.per_lane]
        return d


class _Lane:
    __slots__ = ("q", "bytes_used", "produced", "consumed", "dropped", "lock")

    def __init__(self):
        self.q: deque[bytes] = deque()
        self.bytes_used = 0
        self.produced = 0
        self.consumed = 0
        self.dropped = 0
        self.lock = threading.Lock()


class RingBuffer:
    def __init__(self, config: RingConfig | None = None):
        self.config = config or RingConfig()
        self._lanes = [_Lane() for _ in range(self.config.lanes)]

    def _lane(self, lane: int) -> _Lane:
        if not 0 <= lane < len(self._lanes):
            raise LaneOutOfRange(f"lane {lane} not in [0, {len(self._lanes)})")
        return self._lanes[lane]

    def produce(self, lane: int, payload: bytes) -> bool:
        """Enqueue one record; returns True if accepted, False if dropped."""
        ln = self._lane(lane)
        size = len(payload) + LEN_PREFIX
        with ln.lock:
            ln.produced += 1
            if ln.bytes_used + size > self.config.capacity_bytes_per_lane:
                ln.dropped += 1
                return False
            ln.q.append(payload)
            ln.bytes_used += size
            return True

    def consume_batch(self, lane: int, max_records: int) -> list[bytes]:
        """Dequeue up to max_records oldest records in FIFO order."""
        ln = self._lane(lane)
        out: list[bytes] = []
        with ln.lock:
            n = min(max_records, len(ln.q))
            for _ in range(n):
                rec = ln.q.popleft()
                ln.bytes_used -= len(rec) + LEN_PREFIX
                out.append(rec)
            ln.consumed += n
        return out

    def would_fit(self, lane: int, payload_len: int) -> bool:
        ln = self._lane(lane)
        return ln.bytes_used + payload_len + LEN_PREFIX <= self.config.capacity_bytes_per_lane

    def buffered(self, lane: int) -> int:
        return len(self._lane(lane).q)

    def stats(self) -> RingStats:
        total = RingStats()
        for ln in self._lanes:
            with ln.lock:
                s = LaneStats(ln.produced, ln.consumed, ln.dropped, len(ln.q))
            total.per_lane.append(s)
            total.produced += s.produced
            total.consumed += s.consumed
            total.dropped += s.dropped
            total.buffered += s.buffered
        return total
