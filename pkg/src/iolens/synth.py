"""Synthetic trace generators for tests, demos, and benchmarks."""

from __future__ import annotations

import random
from typing import Any, Iterator, Optional

SEC = 1_000_000_000


def _ev(pid: int, tid: int, comm: str, kind: str, args: dict, ret, t: int,
        dur: int = 20_000, **extra) -> dict[str, Any]:
    rec = {"pid": pid, "tid": tid, "comm": comm, "kind": kind, "args": args,
           "ret": ret, "t_entry": t, "t_exit": t + dur}
    rec.update(extra)
    return rec


def fluentbit_records(fixed: bool = False) -> list[dict[str, Any]]:
    """The log-tailing data-loss scenario: same inode reused for app.log.

    fixed=False reproduces the buggy reader that seeks to the stale offset;
    fixed=True reproduces the corrected reader starting at offset 0.
    """
    app = dict(pid=101, tid=101, comm="app")
    reader_comm = "flb-pipeline" if fixed else "fluent-bit"
    fb = dict(pid=202, tid=202, comm=reader_comm)
    f = dict(dev=2049, ino=12, mode="regular")
    recs = [
        _ev(**app, kind="creat", args={"path": "app.log", "mode": 420}, ret=3,
            t=1 * SEC, **f),
        _ev(**app, kind="write", args={"fd": 3, "count": 26}, ret=26, t=int(1.1 * SEC)),
        _ev(**app, kind="close", args={"fd": 3}, ret=0, t=int(1.2 * SEC)),
        _ev(**fb, kind="openat", args={"path": "app.log", "flags": 0}, ret=7,
            t=2 * SEC, **f),
        _ev(**fb, kind="read", args={"fd": 7, "count": 32768}, ret=26, t=int(2.1 * SEC)),
        _ev(**app, kind="unlink", args={"path": "app.log"}, ret=0, t=3 * SEC, **f),
        _ev(**fb, kind="close", args={"fd": 7}, ret=0, t=int(3.1 * SEC)),
        _ev(**app, kind="creat", args={"path": "app.log", "mode": 420}, ret=3,
            t=4 * SEC, **f),
        _ev(**app, kind="write", args={"fd": 3, "count": 16}, ret=16, t=int(4.1 * SEC)),
        _ev(**fb, kind="openat", args={"path": "app.log", "flags": 0}, ret=8,
            t=5 * SEC, **f),
    ]
    if fixed:
        recs.append(_ev(**fb, kind="read", args={"fd": 8, "count": 32768}, ret=16,
                        t=int(5.1 * SEC)))
    else:
        recs.append(_ev(**fb, kind="lseek",
                        args={"fd": 8, "offset": 26, "whence": "set"}, ret=26,
                        t=int(5.05 * SEC)))
        recs.append(_ev(**fb, kind="read", args={"fd": 8, "count": 32768}, ret=0,
                        t=int(5.1 * SEC)))
    return recs


def contention_records(duration_s: int = 600,
                       contended: Optional[list[tuple[int, int]]] = None,
                       fg_rate: int = 40, bg_threads: int = 7,
                       quiet_bg: int = 2, seed: int = 7,
                       ) -> tuple[list[dict[str, Any]], list[tuple[int, int]]]:
    """A key-value-store style workload with known contention windows.

    Foreground db_bench threads issue fg_rate syscalls per second; inside a
    contended window the rate halves and >=5 of the bg_threads compaction
    threads do I/O, otherwise at most quiet_bg background threads are active.
    Returns (records, ground-truth windows in seconds).
    """
    if contended is None:
        contended = [(100, 160), (300, 370), (500, 540)]
    rng = random.Random(seed)
    recs: list[dict[str, Any]] = []
    fg_tids = list(range(900, 908))
    for sec in range(duration_s):
        hot = any(a <= sec < b for a, b in contended)
        rate = fg_rate // 2 if hot else fg_rate
        base = sec * SEC
        for i in range(rate):
            t = base + (i * SEC) // rate
            tid = fg_tids[i % len(fg_tids)]
            recs.append(_ev(4000, tid, "db_bench", "read",
                            {"fd": 10, "count": 4096}, 4096, t))
        n_bg = rng.randint(5, bg_threads) if hot else rng.randint(1, quiet_bg)
        active = rng.sample(range(bg_threads), n_bg)
        for j, th in enumerate(active):
            for k in range(6 if hot else 2):
                t = base + (j * 97 + k * 31) % SEC
                recs.append(_ev(4000, 950 + th, f"rocksdb:low{th}", "write",
                                {"fd": 20 + th, "count": 1 << 20}, 1 << 20, t))
        if sec % 10 == 0:
            recs.append(_ev(4000, 949, "rocksdb:high0", "write",
                            {"fd": 19, "count": 1 << 18}, 1 << 18, base + 500))
    recs.sort(key=lambda r: r["t_entry"])
    return recs, contended


_FD_OPS = ("open", "close", "read", "write", "pread64", "pwrite64", "lseek",
           "truncate")


def random_fd_workload(rng: random.Random, n_ops: int, n_fds: int = 8,
                       pid: int = 500) -> Iterator[dict[str, Any]]:
    """Randomized open/close/read/write/pread/pwrite/lseek/truncate stream.

    Drives the offset-tracking state machine through edge cases: appends,
    seeks past EOF, unknown sizes, failed calls, reuse of closed fds.
    """
    paths = [f"/data/f{i}" for i in range(n_fds)]
    inos = {p: 100 + i for i, p in enumerate(paths)}
    open_fds: dict[int, str] = {}
    next_fd = 3
    t = SEC
    for _ in range(n_ops):
        t += rng.randint(1_000, 50_000)
        op = rng.choice(_FD_OPS)
        if op == "open" or not open_fds:
            path = rng.choice(paths)
            kind = rng.choice(("open", "openat", "openat", "creat"))
            if kind == "creat":
                args = {"path": path, "mode": 420}
            else:
                args = {"path": path, "mode": 420,
                        "flags": rng.choice((0, 0, 0o1000, 0o2000, 0o1102, 0o102))}
            fd = next_fd
            next_fd += 1
            open_fds[fd] = path
            yield _ev(pid, pid, "wrk", kind, args, fd, t,
                      dev=7, ino=inos[path], mode="regular")
            continue
        fd = rng.choice(list(open_fds))
        fail = rng.random() < 0.05
        if op == "close":
            del open_fds[fd]
            yield _ev(pid, pid, "wrk", "close", {"fd": fd}, 0, t)
        elif op == "read":
            n = rng.randint(0, 8192)
            yield _ev(pid, pid, "wrk", "read", {"fd": fd, "count": 8192},
                      -5 if fail else n, t)
        elif op == "write":
            n = rng.randint(0, 8192)
            yield _ev(pid, pid, "wrk", "write", {"fd": fd, "count": n},
                      -5 if fail else n, t)
        elif op == "pread64":
            off = rng.randint(0, 1 << 20)
            n = rng.randint(0, 4096)
            yield _ev(pid, pid, "wrk", "pread64",
                      {"fd": fd, "count": 4096, "offset": off},
                      -5 if fail else n, t)
        elif op == "pwrite64":
            off = rng.randint(0, 1 << 20)
            n = rng.randint(0, 4096)
            yield _ev(pid, pid, "wrk", "pwrite64",
                      {"fd": fd, "count": n, "offset": off},
                      -5 if fail else n, t)
        elif op == "lseek":
            whence = rng.choice(("set", "cur", "end"))
            off = rng.randint(0, 1 << 16) if whence == "set" else rng.randint(-512, 4096)
            known_result = rng.random() < 0.7
            ret = -22 if fail else (rng.randint(0, 1 << 20) if known_result else None)
            rec = _ev(pid, pid, "wrk", "lseek",
                      {"fd": fd, "offset": off, "whence": whence}, ret, t)
            if ret is None:
                rec["t_exit"] = None
            yield rec
        else:  # truncate by path
            path = rng.choice(paths)
            length = rng.randint(0, 1 << 16)
            yield _ev(pid, pid, "wrk", "truncate",
                      {"path": path, "count": length}, -13 if fail else 0, t)


def random_store_records(rng: random.Random, n: int,
                         session_time_span_s: int = 60) -> list[dict[str, Any]]:
    """Random well-formed events for store query/aggregate oracles."""
    kinds = ("read", "write", "openat", "close", "fsync", "lseek", "stat")
    comms = ("db_bench", "rocksdb:low0", "rocksdb:low1", "flush", "app")
    recs = []
    for i in range(n):
        kind = rng.choice(kinds)
        t = rng.randrange(0, session_time_span_s * SEC)
        if kind == "openat":
            args = {"path": f"/d/f{rng.randrange(20)}", "flags": 0, "mode": 420}
            ret = rng.randrange(3, 40)
        elif kind == "stat":
            args = {"path": f"/d/f{rng.randrange(20)}"}
            ret = 0
        elif kind == "lseek":
            args = {"fd": rng.randrange(3, 40), "offset": rng.randrange(1 << 16),
                    "whence": "set"}
            ret = args["offset"]
        elif kind == "close":
            args = {"fd": rng.randrange(3, 40)}
            ret = 0
        elif kind == "fsync":
            args = {"fd": rng.randrange(3, 40)}
            ret = 0
        else:
            args = {"fd": rng.randrange(3, 40), "count": rng.randrange(1 << 14)}
            ret = rng.randrange(-1, args["count"] + 1)
        recs.append(_ev(rng.randrange(100, 105), rng.randrange(100, 110),
                        rng.choice(comms), kind, args, ret, t,
                        dur=rng.randrange(1_000, 200_000)))
    return recs


def tagged_session_records(rng: random.Random, n_events: int,
                           n_files: int = 400) -> list[dict[str, Any]]:
    """Open/read/write/close cycles where every event lands on a tagged file.

    Every record carries dev/ino hints (as kernel-side enrichment would), so
    deleting an open still leaves the file's other events identifiable by tag.
    """
    recs = []
    t = SEC
    fd = 3
    per_file = max(2, n_events // n_files)
    made = 0
    ino = 1000
    while made < n_events:
        path = f"/logs/part-{ino}.log"
        hints = dict(dev=9, ino=ino, mode="regular")
        t += rng.randint(10_000, 40_000)
        recs.append(_ev(700, 700, "writer", "openat",
                        {"path": path, "flags": 0o102, "mode": 420}, fd, t, **hints))
        made += 1
        k = min(per_file - 2, n_events - made - 1)
        for _ in range(max(0, k)):
            t += rng.randint(1_000, 20_000)
            n = rng.randint(1, 4096)
            recs.append(_ev(700, 700, "writer", "write",
                            {"fd": fd, "count": n}, n, t, **hints))
            made += 1
        t += rng.randint(1_000, 20_000)
        recs.append(_ev(700, 700, "writer", "close", {"fd": fd}, 0, t, **hints))
        made += 1
        fd += 1
        ino += 1
    return recs


def half_event_stream(n_events: int, pid: int = 3000,
                      n_tids: int = 4) -> Iterator[dict[str, Any]]:
    """Interleaved entry/exit halves for n_events read/write syscalls."""
    t = SEC
    fds = {tid: 5 + i for i, tid in enumerate(range(pid, pid + n_tids))}
    pending: list[dict] = []
    for i in range(n_events):
        tid = pid + (i % n_tids)
        kind = "write" if i % 3 else "read"
        t += 1500
        yield {"dir": "entry", "pid": pid, "tid": tid, "comm": "bench",
               "kind": kind, "args": {"fd": fds[tid], "count": 4096},
               "t_entry": t}
        pending.append({"tid": tid, "kind": kind, "t": t})
        if len(pending) >= n_tids or i == n_events - 1:
            for p in pending:
                t += 700
                yield {"dir": "exit", "pid": pid, "tid": p["tid"],
                       "kind": p["kind"], "ret": 4096, "t_exit": t}
            pending.clear()
