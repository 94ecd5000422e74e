import io

import msgspec
import pytest

from conftest import FIXTURES, records_to_stream
from iolens import synth
from iolens.capture import (CaptureSource, HalfEventPairer, ReplayCapture,
                            match_filter, open_capture)
from iolens.errors import MalformedInput
from iolens.model import FilterSpec


def drain(handle):
    out = []
    while True:
        batch = handle.next_batch(7)
        if not batch:
            return out
        out.extend(batch)


def half(direction, tid, kind, t, pid=1, ret=None, args=None):
    if direction == "entry":
        return {"dir": "entry", "pid": pid, "tid": tid, "comm": "p", "kind": kind,
                "args": args or {"fd": 3, "count": 8}, "t_entry": t}
    return {"dir": "exit", "pid": pid, "tid": tid, "kind": kind, "ret": ret,
            "t_exit": t}


class TestPairing:
    def test_single_pair(self):
        p = HalfEventPairer()
        assert p.push(half("entry", 3, "read", 10)) is None
        rec = p.push(half("exit", 3, "read", 15, ret=8))
        assert rec["t_entry"] == 10 and rec["t_exit"] == 15 and rec["ret"] == 8

    def test_interleaved_tids(self):
        p = HalfEventPairer()
        p.push(half("entry", 1, "read", 1))
        p.push(half("entry", 2, "write", 2))
        r1 = p.push(half("exit", 1, "read", 3, ret=4))
        r2 = p.push(half("exit", 2, "write", 4, ret=5))
        assert (r1["tid"], r1["t_entry"], r1["t_exit"]) == (1, 1, 3)
        assert (r2["tid"], r2["t_entry"], r2["t_exit"]) == (2, 2, 4)

    def test_orphan_exit_counted_and_skipped(self):
        p = HalfEventPairer()
        assert p.push(half("exit", 5, "read", 9, ret=1)) is None
        assert p.orphan_exits == 1

    def test_unmatched_entries_flushed_with_unknown_exit(self):
        p = HalfEventPairer()
        p.push(half("entry", 1, "read", 10))
        p.push(half("entry", 2, "write", 5))
        rest = p.finish()
        assert [r["t_entry"] for r in rest] == [5, 10]
        assert all(r["t_exit"] is None and r["ret"] is None for r in rest)

    def test_same_kind_matches_most_recent_entry(self):
        p = HalfEventPairer()
        p.push(half("entry", 1, "read", 1))
        p.push(half("entry", 1, "read", 2))
        rec = p.push(half("exit", 1, "read", 3, ret=0))
        assert rec["t_entry"] == 2


class TestMatchFilter:
    rec = {"pid": 7, "tid": 8, "kind": "write", "args": {"fd": 3, "count": 1}}

    def test_empty_filter_matches_all(self):
        assert match_filter(self.rec, FilterSpec())

    def test_tid_mismatch(self):
        assert not match_filter(self.rec, FilterSpec(tids=frozenset({9})))
        assert match_filter(self.rec, FilterSpec(tids=frozenset({8})))

    def test_path_prefix_on_path_arg(self):
        rec = {"pid": 1, "tid": 1, "kind": "openat",
               "args": {"path": "/var/log/app.log", "flags": 0}}
        spec = FilterSpec(path_prefixes=frozenset({"/var/log"}))
        assert match_filter(rec, spec)
        assert not match_filter(rec, FilterSpec(path_prefixes=frozenset({"/tmp"})))

    def test_path_prefix_via_fd_table(self):
        spec = FilterSpec(path_prefixes=frozenset({"/var"}))
        fd_paths = {(7, 3): "/var/x"}
        assert match_filter(self.rec, spec, fd_paths)
        assert not match_filter(self.rec, spec, {(7, 3): "/tmp/x"})
        # no path known at all: only matches when no path filter present
        assert not match_filter(self.rec, spec, {})
        assert match_filter(self.rec, FilterSpec(), {})


class TestReplay:
    def mk(self, records, **kw):
        src = CaptureSource(session="s", replay_stream=records_to_stream(records), **kw)
        return open_capture(src)

    def test_identity_filter_keeps_all(self):
        recs = synth.fluentbit_records()
        h = self.mk(recs)
        out = drain(h)
        assert len(out) == len(recs)
        assert [r["seq"] for r in out] == list(range(len(recs)))

    def test_kind_filter(self):
        recs, _ = synth.contention_records(duration_s=5)
        h = self.mk(recs, filter=FilterSpec(kinds=frozenset({"read"})))
        out = drain(h)
        assert out and all(r["kind"] == "read" for r in out)
        brute = [r for r in recs if r["kind"] == "read"]
        assert len(out) == len(brute)
        assert h.stats.filtered_out == len(recs) - len(brute)

    def test_path_filter_follows_fds(self):
        recs = synth.fluentbit_records()
        h = self.mk(recs, filter=FilterSpec(path_prefixes=frozenset({"app.log"})))
        out = drain(h)
        # every event in the scenario touches app.log via path or fd
        assert len(out) == len(recs)

    def test_path_filter_excludes_foreign_paths(self):
        recs = [
            {"pid": 1, "tid": 1, "comm": "a", "kind": "openat",
             "args": {"path": "/tmp/app/x", "flags": 0}, "ret": 3,
             "t_entry": 1, "t_exit": 2},
            {"pid": 1, "tid": 1, "comm": "a", "kind": "openat",
             "args": {"path": "/etc/hosts", "flags": 0}, "ret": 4,
             "t_entry": 3, "t_exit": 4},
            {"pid": 1, "tid": 1, "comm": "a", "kind": "read",
             "args": {"fd": 3, "count": 1}, "ret": 1, "t_entry": 5, "t_exit": 6},
            {"pid": 1, "tid": 1, "comm": "a", "kind": "read",
             "args": {"fd": 4, "count": 1}, "ret": 1, "t_entry": 7, "t_exit": 8},
        ]
        h = self.mk(recs, filter=FilterSpec(path_prefixes=frozenset({"/tmp/app"})))
        out = drain(h)
        assert [r["args"].get("path", r["args"].get("fd")) for r in out] == ["/tmp/app/x", 3]

    def test_half_events_paired_in_stream(self):
        halves = list(synth.half_event_stream(50))
        h = self.mk(halves)
        out = drain(h)
        assert len(out) == 50
        per_tid: dict[int, list[int]] = {}
        for r in out:
            assert r["t_exit"] >= r["t_entry"]
            per_tid.setdefault(r["tid"], []).append(r["t_entry"])
        for ts in per_tid.values():
            assert ts == sorted(ts)

    def test_malformed_line_reports_line_number(self):
        stream = io.BytesIO(b'{"pid": 1}\n')
        with pytest.raises(MalformedInput) as ei:
            drain(self.mk([]) if False else open_capture(
                CaptureSource(session="s", replay_stream=stream)))
        assert ei.value.line_no == 1

        stream = io.BytesIO(
            msgspec.json.encode(synth.fluentbit_records()[0]) + b"\nnot json\n")
        with pytest.raises(MalformedInput) as ei:
            drain(open_capture(CaptureSource(session="s", replay_stream=stream)))
        assert ei.value.line_no == 2

    def test_unknown_top_level_fields_ignored(self):
        rec = dict(synth.fluentbit_records()[0])
        rec["exotic_extension"] = [1, 2, 3]
        out = drain(self.mk([rec]))
        assert len(out) == 1 and "exotic_extension" not in out[0]

    def test_replay_determinism_bytes(self):
        recs, _ = synth.contention_records(duration_s=10)
        spec = FilterSpec(kinds=frozenset({"read", "write"}))

        def run():
            h = self.mk(recs, filter=spec)
            return b"\n".join(msgspec.json.encode(r) for r in drain(h))

        assert run() == run()

    def test_replay_from_file(self):
        src = CaptureSource(session="s",
                            replay_path=str(FIXTURES / "fluentbit_v1.jsonl"))
        out = drain(open_capture(src))
        assert len(out) == 12
        assert all(r["session"] == "s" for r in out)
