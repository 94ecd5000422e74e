"""Per-process fd state reconstruction: file types, offsets, and file tags.

The table consumes aggregated records in timestamp order and attaches an
``enrichment`` block to each. Unknown values stay None; they are never
guessed. Transitions that contradict the known state (e.g. a read on an fd
nobody opened) increment ``inconsistencies`` and enrich with unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

from .model import FD_KINDS, OPEN_KINDS, FileType

O_TRUNC = 0o1000
O_APPEND = 0o2000

_MODE_MAP = {
    "regular": FileType.REGULAR.value,
    "directory": FileType.DIRECTORY.value,
    "socket": FileType.SOCKET.value,
    "block": FileType.BLOCK_DEVICE.value,
    "char": FileType.CHAR_DEVICE.value,
    "pipe": FileType.PIPE.value,
    "symlink": FileType.SYMLINK.value,
    "other": FileType.OTHER.value,
}

_UNKNOWN = FileType.UNKNOWN.value


def classify_file_type(path: Optional[str], mode_hint: Optional[str]) -> str:
    """Map a replay mode hint (or a trailing-slash path) to a file type."""
    if mode_hint:
        return _MODE_MAP.get(mode_hint, _UNKNOWN)
    if path and path.endswith("/"):
        return FileType.DIRECTORY.value
    return _UNKNOWN


@dataclass(slots=True)
class OpenFileState:
    path: Optional[str] = None
    file_type: str = _UNKNOWN
    offset: Optional[int] = None
    known_size: Optional[int] = None
    append_mode: bool = False
    tag: Optional[dict[str, int]] = None  # record-form {dev, ino, first_access}


class FdTable:
    """Reconstructed fd state for one session.

    Mutated by a single pipeline thread; events from different pids may
    interleave but each pid's stream must arrive in timestamp order.
    """

    def __init__(self):
        self.fds: dict[tuple[int, int], OpenFileState] = {}
        self.inode_tags: dict[tuple[int, int], dict[str, int]] = {}
        self.path_inode: dict[str, tuple[int, int]] = {}
        self.inconsistencies = 0

    def snapshot_for_child(self, parent_pid: int, child_pid: int) -> None:
        """Copy the parent's fd entries to a child pid (declared fork)."""
        for (pid, fd), st in list(self.fds.items()):
            if pid == parent_pid:
                self.fds[(child_pid, fd)] = OpenFileState(
                    st.path, st.file_type, st.offset, st.known_size,
                    st.append_mode, st.tag)

    # -- transitions -------------------------------------------------------

    def apply(self, rec: dict[str, Any]) -> dict[str, Any]:
        """Attach enrichment to one aggregated record and update state."""
        kind = rec["kind"]
        args = rec["args"]
        ret = rec["ret"]
        ok = ret is not None and ret >= 0
        pid = rec["pid"]

        ftype = _UNKNOWN
        before = after = None
        tag = None

        if kind in OPEN_KINDS:
            ftype = classify_file_type(args.get("path"), rec.get("mode"))
            if ok:
                flags = args.get("flags") or 0
                truncating = kind == "creat" or bool(flags & O_TRUNC)
                append = kind != "creat" and bool(flags & O_APPEND)
                path = args.get("path")
                dev, ino = rec.get("dev"), rec.get("ino")
                if dev is not None and ino is not None:
                    key = (dev, ino)
                    tag = self.inode_tags.get(key)
                    if tag is None:
                        tag = {"dev": dev, "ino": ino, "first_access": rec["t_entry"]}
                        self.inode_tags[key] = tag
                    if path:
                        self.path_inode[path] = key
                size = 0 if truncating else None
                offset = (size if append else 0)
                self.fds[(pid, ret)] = OpenFileState(
                    path=path, file_type=ftype, offset=offset,
                    known_size=size, append_mode=append, tag=tag)

        elif kind in FD_KINDS:
            st = self.fds.get((pid, args.get("fd")))
            if st is None:
                # fd opened before the trace (or its open was dropped): state
                # is unknown, but kernel-style per-event dev/ino hints still
                # identify the file incarnation.
                self.inconsistencies += 1
                dev, ino = rec.get("dev"), rec.get("ino")
                if dev is not None and ino is not None:
                    key = (dev, ino)
                    tag = self.inode_tags.get(key)
                    if tag is None:
                        tag = {"dev": dev, "ino": ino, "first_access": rec["t_entry"]}
                        self.inode_tags[key] = tag
                    ftype = classify_file_type(None, rec.get("mode"))
                if kind in ("pread64", "pwrite64", "readahead"):
                    before = after = args.get("offset")
            else:
                ftype = st.file_type
                tag = st.tag
                if kind == "read" or kind == "readv":
                    before = st.offset
                    if ok:
                        after = before + ret if before is not None else None
                        st.offset = after
                    else:
                        after = before
                elif kind == "write" or kind == "writev":
                    before = st.known_size if st.append_mode else st.offset
                    if ok:
                        after = before + ret if before is not None else None
                        st.offset = after
                        if ret > 0:
                            st.known_size = (None if after is None else
                                             max(st.known_size, after)
                                             if st.known_size is not None else None)
                    else:
                        after = before
                elif kind == "pread64":
                    before = after = args.get("offset")
                elif kind == "pwrite64":
                    before = after = args.get("offset")
                    if ok and ret > 0:
                        if before is None:
                            st.known_size = None
                        elif st.known_size is not None:
                            st.known_size = max(st.known_size, before + ret)
                elif kind == "readahead":
                    before = after = args.get("offset")
                elif kind == "lseek":
                    before = st.offset
                    if ret is not None and ret < 0:
                        after = before  # failed seek does not move the offset
                    else:
                        if ok:
                            after = ret
                        else:  # unknown exit: compute from whence rules
                            whence, req = args.get("whence"), args.get("offset")
                            if whence == "set":
                                after = req
                            elif whence == "cur":
                                after = (before + req
                                         if before is not None and req is not None else None)
                            elif whence == "end":
                                after = (st.known_size + req
                                         if st.known_size is not None and req is not None else None)
                            else:
                                after = None
                            if after is not None and after < 0:
                                after = before  # kernel would reject; no movement
                        st.offset = after
                elif kind == "ftruncate":
                    if ok:
                        st.known_size = args.get("count")
                elif kind == "close":
                    if ret == 0:
                        del self.fds[(pid, args["fd"])]
                # fstat/fstatfs/f*xattr/fsync/fdatasync: state untouched

        elif kind == "unlink" or kind == "unlinkat":
            ftype = classify_file_type(args.get("path"), rec.get("mode"))
            if ret == 0:
                key = self.path_inode.pop(args.get("path"), None)
                if key is not None:
                    self.inode_tags.pop(key, None)

        elif kind == "truncate":
            ftype = classify_file_type(args.get("path"), rec.get("mode"))
            if ret == 0:
                path, length = args.get("path"), args.get("count")
                for st in self.fds.values():
                    if st.path == path:
                        st.known_size = length

        elif kind in ("rename", "renameat", "renameat2"):
            if ret == 0:
                old, new = args.get("path"), args.get("new_path")
                key = self.path_inode.pop(old, None) if old else None
                if new:
                    replaced = self.path_inode.get(new)
                    if replaced is not None and replaced != key:
                        self.inode_tags.pop(replaced, None)
                    if key is not None:
                        self.path_inode[new] = key
                    else:
                        self.path_inode.pop(new, None)

        else:
            # stat-family / path xattr / readlink / mknod: classify only
            ftype = classify_file_type(args.get("path"), rec.get("mode"))

        rec["enrichment"] = {
            "file_type": ftype,
            "offset_before": before,
            "offset_after": after,
            "tag": tag,
            "resolved_path": None,
        }
        return rec
