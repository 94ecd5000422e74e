import msgspec
import pytest

from conftest import records_to_stream
from iolens import pipeline, synth
from iolens.capture import CaptureSource, open_capture
from iolens.ringbuf import RingConfig
from iolens.store import Predicate, QuerySpec


def ingest(store, name, records, **kw):
    src = CaptureSource(session=name, replay_stream=records_to_stream(records))
    return pipeline.run_replay(open_capture(src), store, **kw)


def test_half_event_trace_end_to_end(store):
    halves = list(synth.half_event_stream(500))
    res = ingest(store, "s", halves)
    assert res.stored == 500
    assert res.produced == 500
    assert res.orphan_exits == 0
    docs = store.iter_docs("s")
    assert all(d["t_exit"] is not None for d in docs)


def test_replay_never_drops_with_tiny_ring(store):
    recs, _ = synth.contention_records(duration_s=10)
    res = ingest(store, "s", recs,
                 ring_config=RingConfig(lanes=1, capacity_bytes_per_lane=4096))
    assert res.dropped == 0
    assert res.stored == len(recs)


def test_session_stats_identity(store):
    recs = synth.fluentbit_records()
    res = ingest(store, "s", recs)
    stats = store.get_session("s").stats
    assert stats.produced == stats.stored + stats.dropped
    assert stats.produced == res.produced


def test_fork_control_record_applies_snapshot(store):
    t = synth.SEC
    recs = [
        synth._ev(10, 10, "parent", "openat",
                  {"path": "/x", "flags": 0o102, "mode": 420}, 3, t),
        synth._ev(10, 10, "parent", "write", {"fd": 3, "count": 6}, 6, t + 10),
        {"fork": {"parent": 10, "child": 11}},
        synth._ev(11, 11, "child", "write", {"fd": 3, "count": 4}, 4, t + 20),
    ]
    res = ingest(store, "s", recs)
    assert res.stored == 3  # the control line is not an event
    assert res.inconsistencies == 0
    child_write = store.query(QuerySpec(
        session="s", match=[Predicate("pid", "eq", 11)]))[0]
    assert child_write["enrichment"]["offset_before"] == 6


def test_undeclared_child_fd_is_inconsistent(store):
    t = synth.SEC
    recs = [
        synth._ev(10, 10, "parent", "openat",
                  {"path": "/x", "flags": 0o102, "mode": 420}, 3, t),
        synth._ev(11, 11, "child", "write", {"fd": 3, "count": 4}, 4, t + 20),
    ]
    res = ingest(store, "s", recs)
    assert res.inconsistencies == 1


def test_filter_applies_before_ring_enqueue(store):
    """An excluded kind never reaches the ring buffer."""
    from iolens.capture import encode_record
    from iolens.model import FilterSpec
    from iolens.ringbuf import RingBuffer

    recs, _ = synth.contention_records(duration_s=5)
    src = CaptureSource(session="s", filter=FilterSpec(kinds=frozenset({"read"})),
                        replay_stream=records_to_stream(recs))
    handle = open_capture(src)
    ring = RingBuffer(RingConfig(lanes=1))
    for rec in handle:
        ring.produce(0, encode_record(rec))
    st = ring.stats()
    assert st.produced == handle.stats.produced
    assert handle.stats.filtered_out > 0
    for payload in ring.consume_batch(0, 10 ** 6):
        assert msgspec.json.decode(payload)["kind"] == "read"


def test_auto_resolve_toggle(store):
    recs = synth.fluentbit_records()
    res = ingest(store, "a", recs, resolve=False)
    assert res.resolution is None
    assert store.iter_docs("a")[1]["enrichment"]["resolved_path"] is None
    res = ingest(store, "b", recs, resolve=True)
    assert res.resolution["resolved"] == 11
    assert store.iter_docs("b")[1]["enrichment"]["resolved_path"] == "app.log"
