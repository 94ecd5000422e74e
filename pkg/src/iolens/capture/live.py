"""Linux live capture: a ptrace(PTRACE_SYSCALL) tracer behind the capture
contract.

Spawns the target with TRACEME, follows forks/clones/execs, decodes the 42
supported syscalls from registers at entry/exit stops, and produces filtered
aggregated records straight into the pipeline's ring buffer from the tracer
thread (never blocking on the consumer). Requires x86_64; other platforms
get Unsupported.
"""

from __future__ import annotations

import ctypes
import os
import shutil
import signal
import stat as stat_mod
import sys
import threading
import time
from typing import Any, Optional

from ..errors import SpawnFailed, Unsupported
from ..model import CATALOG, FilterSpec
from . import CaptureStats, CaptureSource, encode_record, match_filter

PTRACE_TRACEME = 0
PTRACE_CONT = 7
PTRACE_GETREGS = 12
PTRACE_SYSCALL = 24
PTRACE_SETOPTIONS = 0x4200

PTRACE_O_TRACESYSGOOD = 0x01
PTRACE_O_TRACEFORK = 0x02
PTRACE_O_TRACEVFORK = 0x04
PTRACE_O_TRACECLONE = 0x08
PTRACE_O_TRACEEXEC = 0x10

PTRACE_EVENT_EXEC = 4

WALL = 0x40000000
SYSCALL_TRAP = signal.SIGTRAP | 0x80


class _Regs(ctypes.Structure):
    _fields_ = [(n, ctypes.c_ulonglong) for n in (
        "r15", "r14", "r13", "r12", "rbp", "rbx", "r11", "r10", "r9", "r8",
        "rax", "rcx", "rdx", "rsi", "rdi", "orig_rax", "rip", "cs", "eflags",
        "rsp", "ss", "fs_base", "gs_base", "ds", "es", "fs", "gs")]


def _signed(v: int) -> int:
    return v - (1 << 64) if v >= (1 << 63) else v


# x86_64 syscall numbers for the supported catalog
SYSCALL_NUMBERS: dict[int, str] = {
    0: "read", 1: "write", 2: "open", 3: "close", 4: "stat", 5: "fstat",
    6: "lstat", 8: "lseek", 17: "pread64", 18: "pwrite64", 19: "readv",
    20: "writev", 74: "fsync", 75: "fdatasync", 76: "truncate",
    77: "ftruncate", 82: "rename", 85: "creat", 87: "unlink", 89: "readlink",
    133: "mknod", 138: "fstatfs", 187: "readahead", 188: "setxattr",
    189: "lsetxattr", 190: "fsetxattr", 191: "getxattr", 192: "lgetxattr",
    193: "fgetxattr", 194: "listxattr", 195: "llistxattr", 196: "flistxattr",
    197: "removexattr", 198: "lremovexattr", 199: "fremovexattr",
    257: "openat", 259: "mknodat", 262: "fstatat", 263: "unlinkat",
    264: "renameat", 267: "readlinkat", 316: "renameat2",
}

assert set(SYSCALL_NUMBERS.values()) == set(CATALOG)

_WHENCE = {0: "set", 1: "cur", 2: "end"}

_MODE_TYPES = (
    (stat_mod.S_ISREG, "regular"), (stat_mod.S_ISDIR, "directory"),
    (stat_mod.S_ISSOCK, "socket"), (stat_mod.S_ISBLK, "block"),
    (stat_mod.S_ISCHR, "char"), (stat_mod.S_ISFIFO, "pipe"),
    (stat_mod.S_ISLNK, "symlink"),
)


def _mode_name(st_mode: int) -> str:
    for test, name in _MODE_TYPES:
        if test(st_mode):
            return name
    return "other"


def platform_supported() -> tuple[bool, str]:
    if sys.platform != "linux":
        return False, f"live capture requires Linux (running on {sys.platform})"
    import platform
    if platform.machine() != "x86_64":
        return False, f"ptrace backend supports x86_64 only (got {platform.machine()})"
    return True, ""


def open_live(source: CaptureSource) -> "LiveCapture":
    ok, reason = platform_supported()
    if not ok:
        raise Unsupported(reason)
    if source.command is None:
        raise Unsupported("attaching to existing pids is not implemented; "
                          "pass a command to spawn")
    return LiveCapture(source)


class LiveCapture:
    """Capture handle for one spawned process tree."""

    def __init__(self, source: CaptureSource):
        self.session = source.session
        self.filter: FilterSpec = source.filter
        self.command = list(source.command)
        self.stats = CaptureStats()
        self.lanes = os.cpu_count() or 1
        self._libc = ctypes.CDLL(None, use_errno=True)
        self._ring = None
        self._thread: Optional[threading.Thread] = None
        self._done = threading.Event()
        self._spawned = threading.Event()
        self._spawn_error: Optional[str] = None
        self._stop_requested = False
        self._root_pid: Optional[int] = None
        self._seq = [0] * self.lanes
        # per-tid tracer state
        self._in_syscall: dict[int, bool] = {}
        self._entries: dict[int, dict[str, Any]] = {}
        self._comm: dict[int, str] = {}
        self._tgid: dict[int, int] = {}
        self._fd_paths: dict[tuple[int, int], str] = {}

    # -- lifecycle -----------------------------------------------------------

    def start(self, ring) -> None:
        """Spawn the target and begin producing into `ring` from a tracer thread."""
        exe = self.command[0]
        found = exe if os.path.sep in exe else shutil.which(exe)
        if not found or not os.access(found, os.X_OK):
            raise SpawnFailed(f"cannot spawn {exe!r}: not an executable")
        self._ring = ring
        self.lanes = min(self.lanes, ring.config.lanes)
        self._thread = threading.Thread(target=self._trace_loop, daemon=True)
        self._thread.start()
        self._spawned.wait()
        if self._spawn_error:
            raise SpawnFailed(self._spawn_error)

    def done(self) -> bool:
        return self._done.is_set()

    def stop(self) -> None:
        """Terminate the traced tree; buffered events stay drainable."""
        self._stop_requested = True
        if self._root_pid is not None:
            try:
                os.killpg(self._root_pid, signal.SIGKILL)
            except (ProcessLookupError, PermissionError):
                pass

    def close(self) -> None:
        self.stop()
        if self._thread is not None:
            self._thread.join(timeout=10)

    # -- ptrace plumbing ----------------------------------------------------------

    def _ptrace(self, req: int, tid: int, addr=0, data=0) -> int:
        ctypes.set_errno(0)
        res = self._libc.ptrace(req, tid, ctypes.c_void_p(addr),
                                ctypes.c_void_p(data))
        return res

    def _resume(self, tid: int, sig: int = 0) -> None:
        self._ptrace(PTRACE_SYSCALL, tid, 0, sig)

    def _read_string(self, tid: int, addr: int, limit: int = 4096) -> Optional[str]:
        if not addr:
            return None
        try:
            with open(f"/proc/{tid}/mem", "rb", buffering=0) as m:
                m.seek(addr)
                raw = m.read(limit)
        except (OSError, ValueError, OverflowError):
            return None
        end = raw.find(b"\0")
        if end >= 0:
            raw = raw[:end]
        return raw.decode("utf-8", "replace")

    def _read_iov_total(self, tid: int, addr: int, iovcnt: int) -> Optional[int]:
        if not addr or iovcnt <= 0 or iovcnt > 1024:
            return None
        try:
            with open(f"/proc/{tid}/mem", "rb", buffering=0) as m:
                m.seek(addr)
                raw = m.read(16 * iovcnt)
        except (OSError, ValueError, OverflowError):
            return None
        total = 0
        for i in range(iovcnt):
            total += int.from_bytes(raw[i * 16 + 8:i * 16 + 16], "little")
        return total

    def _comm_of(self, tid: int) -> str:
        comm = self._comm.get(tid)
        if comm is None:
            try:
                with open(f"/proc/{tid}/comm") as f:
                    comm = f.read().strip()[:16]
            except OSError:
                comm = ""
            self._comm[tid] = comm
        return comm

    def _tgid_of(self, tid: int) -> int:
        tgid = self._tgid.get(tid)
        if tgid is None:
            tgid = tid
            try:
                with open(f"/proc/{tid}/status") as f:
                    for line in f:
                        if line.startswith("Tgid:"):
                            tgid = int(line.split()[1])
                            break
            except OSError:
                pass
            self._tgid[tid] = tgid
        return tgid

    # -- syscall decoding ---------------------------------------------------------

    def _decode_args(self, tid: int, kind: str, r: _Regs) -> dict[str, Any]:
        s = lambda addr: self._read_string(tid, addr)
        a, b, c, d, e = r.rdi, r.rsi, r.rdx, r.r10, r.r8
        if kind in ("read", "write"):
            return {"fd": int(a), "count": int(c)}
        if kind in ("readv", "writev"):
            total = self._read_iov_total(tid, b, int(c))
            return {"fd": int(a), "count": total}
        if kind in ("pread64", "pwrite64"):
            return {"fd": int(a), "count": int(c), "offset": _signed(d)}
        if kind in ("fsync", "fdatasync"):
            return {"fd": int(a)}
        if kind == "readahead":
            return {"fd": int(a), "offset": _signed(b), "count": int(c)}
        if kind == "open":
            return {"path": s(a), "flags": int(b), "mode": int(c)}
        if kind == "openat":
            return {"path": s(b), "flags": int(c), "mode": int(d)}
        if kind == "creat":
            return {"path": s(a), "mode": int(b)}
        if kind == "close":
            return {"fd": int(a)}
        if kind == "lseek":
            return {"fd": int(a), "offset": _signed(b),
                    "whence": _WHENCE.get(int(c), str(int(c)))}
        if kind == "truncate":
            return {"path": s(a), "count": _signed(b)}
        if kind == "ftruncate":
            return {"fd": int(a), "count": _signed(b)}
        if kind == "rename":
            return {"path": s(a), "new_path": s(b)}
        if kind == "renameat":
            return {"path": s(b), "new_path": s(d)}
        if kind == "renameat2":
            return {"path": s(b), "new_path": s(d), "flags": int(e)}
        if kind == "unlink":
            return {"path": s(a)}
        if kind == "unlinkat":
            return {"path": s(b), "flags": int(c)}
        if kind == "readlink":
            return {"path": s(a), "count": int(c)}
        if kind == "readlinkat":
            return {"path": s(b), "count": int(d)}
        if kind in ("stat", "lstat"):
            return {"path": s(a)}
        if kind in ("fstat", "fstatfs"):
            return {"fd": int(a)}
        if kind == "fstatat":
            return {"path": s(b), "flags": int(d)}
        if kind in ("getxattr", "lgetxattr"):
            return {"path": s(a), "name": s(b), "count": int(d)}
        if kind == "fgetxattr":
            return {"fd": int(a), "name": s(b), "count": int(d)}
        if kind in ("setxattr", "lsetxattr"):
            return {"path": s(a), "name": s(b), "count": int(d), "flags": int(e)}
        if kind == "fsetxattr":
            return {"fd": int(a), "name": s(b), "count": int(d), "flags": int(e)}
        if kind in ("listxattr", "llistxattr"):
            return {"path": s(a), "count": int(c)}
        if kind == "flistxattr":
            return {"fd": int(a), "count": int(c)}
        if kind in ("removexattr", "lremovexattr"):
            return {"path": s(a), "name": s(b)}
        if kind == "fremovexattr":
            return {"fd": int(a), "name": s(b)}
        if kind in ("mknod",):
            return {"path": s(a), "mode": int(b)}
        return {"path": s(b), "mode": int(c)}  # mknodat

    # -- event emission ------------------------------------------------------------

    def _emit(self, rec: dict[str, Any]) -> None:
        self.stats.parsed += 1
        matched = match_filter(rec, self.filter, self._fd_paths)
        kind, args, ret = rec["kind"], rec["args"], rec["ret"]
        pid = rec["pid"]
        if kind in ("open", "openat", "creat") and ret is not None and ret >= 0:
            if args.get("path"):
                self._fd_paths[(pid, ret)] = args["path"]
            try:  # kernel-side enrichment hints for the opened file
                st = os.stat(f"/proc/{rec['tid']}/fd/{ret}")
                rec["dev"], rec["ino"] = st.st_dev, st.st_ino
                rec["mode"] = _mode_name(st.st_mode)
            except OSError:
                pass
        elif kind == "close" and ret == 0:
            self._fd_paths.pop((pid, args.get("fd")), None)
        if not matched:
            self.stats.filtered_out += 1
            return
        lane = rec["tid"] % self.lanes
        rec["session"] = self.session
        rec["seq"] = self._seq[lane]
        self._seq[lane] += 1
        self.stats.produced += 1
        self._ring.produce(lane, encode_record(rec))

    # -- main loop -------------------------------------------------------------------

    def _spawn(self) -> Optional[int]:
        # fork/exec by hand: subprocess.Popen would block on its exec-status
        # pipe while the child sits in the pre-exec ptrace stop.
        devnull = os.open(os.devnull, os.O_RDWR)
        pid = os.fork()
        if pid == 0:  # child
            try:
                os.setsid()
                os.dup2(devnull, 1)
                os.dup2(devnull, 2)
                self._libc.ptrace(PTRACE_TRACEME, 0, None, None)
                os.kill(os.getpid(), signal.SIGSTOP)
                os.execvp(self.command[0], self.command)
            except Exception:
                pass
            os._exit(127)
        os.close(devnull)
        return pid

    def _trace_loop(self) -> None:
        root = self._spawn()
        self._root_pid = root
        try:
            _, status = os.waitpid(root, 0)  # initial SIGSTOP from traceme
        except ChildProcessError:
            status = None
        if status is None or not os.WIFSTOPPED(status):
            self._spawn_error = f"cannot spawn {self.command[0]!r}"
            self._spawned.set()
            self._done.set()
            return
        opts = (PTRACE_O_TRACESYSGOOD | PTRACE_O_TRACEFORK | PTRACE_O_TRACEVFORK
                | PTRACE_O_TRACECLONE | PTRACE_O_TRACEEXEC)
        self._ptrace(PTRACE_SETOPTIONS, root, 0, opts)
        self._in_syscall[root] = False
        self._spawned.set()
        self._resume(root)

        regs = _Regs()
        kinds_filter = self.filter.kinds
        while True:
            try:
                tid, status = os.waitpid(-1, WALL)
            except ChildProcessError:
                break
            except OSError:
                try:
                    tid, status = os.waitpid(-1, 0)
                except (ChildProcessError, OSError):
                    break
            if os.WIFEXITED(status) or os.WIFSIGNALED(status):
                self._flush_pending(tid)
                self._in_syscall.pop(tid, None)
                continue
            if not os.WIFSTOPPED(status):
                continue
            sig = os.WSTOPSIG(status)
            event = (status >> 16) & 0xFF
            if event:  # fork/vfork/clone/exec event stop
                if event == PTRACE_EVENT_EXEC:
                    self._comm.pop(tid, None)
                    self._tgid.pop(tid, None)
                self._resume(tid)
                continue
            if sig == SYSCALL_TRAP:
                if self._ptrace(PTRACE_GETREGS, tid, 0,
                                ctypes.addressof(regs)) != 0:
                    self._resume(tid)
                    continue
                in_syscall = self._in_syscall.get(tid, False)
                if not in_syscall:
                    self._in_syscall[tid] = True
                    kind = SYSCALL_NUMBERS.get(regs.orig_rax)
                    if kind is not None and (kinds_filter is None
                                             or kind in kinds_filter):
                        self._entries[tid] = {
                            "kind": kind,
                            "args": self._decode_args(tid, kind, regs),
                            "t_entry": time.monotonic_ns(),
                            "comm": self._comm_of(tid),
                            "pid": self._tgid_of(tid),
                        }
                else:
                    self._in_syscall[tid] = False
                    entry = self._entries.pop(tid, None)
                    if entry is not None:
                        self._emit({
                            "session": self.session, "pid": entry["pid"],
                            "tid": tid, "comm": entry["comm"],
                            "kind": entry["kind"], "args": entry["args"],
                            "ret": _signed(regs.rax),
                            "t_entry": entry["t_entry"],
                            "t_exit": time.monotonic_ns()})
                self._resume(tid)
            elif sig == signal.SIGSTOP and tid not in self._in_syscall:
                # first stop of a newly attached child/thread
                self._in_syscall[tid] = False
                self._resume(tid)
            else:
                fwd = 0 if sig in (signal.SIGTRAP, signal.SIGSTOP) else sig
                self._resume(tid, fwd)

        for tid in list(self._entries):
            self._flush_pending(tid)
        self._done.set()

    def _flush_pending(self, tid: int) -> None:
        """Emit an in-flight syscall with unknown exit (tracee died mid-call)."""
        entry = self._entries.pop(tid, None)
        if entry is not None:
            self._emit({"session": self.session, "pid": entry["pid"],
                        "tid": tid, "comm": entry["comm"], "kind": entry["kind"],
                        "args": entry["args"], "ret": None,
                        "t_entry": entry["t_entry"], "t_exit": None})
