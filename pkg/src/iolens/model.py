"""Domain model: syscall catalog, event records, and the shared value types.

Events travel through the pipeline as plain dicts in the canonical record
shape (one JSON object per line in trace files); see ``to_record`` /
``from_record`` on :class:`SyscallEvent` for the typed view of the same data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .errors import NotInCatalog


class Category(str, Enum):
    DATA = "data"
    METADATA = "metadata"
    EXTENDED = "extended"
    DIRECTORY = "directory"


class FileType(str, Enum):
    REGULAR = "regular"
    DIRECTORY = "directory"
    SOCKET = "socket"
    BLOCK_DEVICE = "block"
    CHAR_DEVICE = "char"
    PIPE = "pipe"
    SYMLINK = "symlink"
    OTHER = "other"
    UNKNOWN = "unknown"


_DATA = ("read", "pread64", "readv", "write", "pwrite64", "writev",
         "fsync", "fdatasync", "readahead")
_METADATA = ("creat", "open", "openat", "close",
             "lseek", "truncate", "ftruncate",
             "rename", "renameat", "renameat2",
             "unlink", "unlinkat", "readlink", "readlinkat",
             "stat", "lstat", "fstat", "fstatfs", "fstatat")
_EXTENDED = ("getxattr", "lgetxattr", "fgetxattr",
             "setxattr", "lsetxattr", "fsetxattr",
             "listxattr", "llistxattr", "flistxattr",
             "removexattr", "lremovexattr", "fremovexattr")
_DIRECTORY = ("mknod", "mknodat")

CATALOG: dict[str, Category] = {}
for _names, _cat in ((_DATA, Category.DATA), (_METADATA, Category.METADATA),
                     (_EXTENDED, Category.EXTENDED), (_DIRECTORY, Category.DIRECTORY)):
    for _n in _names:
        CATALOG[_n] = _cat

# Argument fields defined per syscall kind.  "count" doubles as the byte
# length for truncate/ftruncate and the size argument of xattr/readlink.
ARG_FIELDS: dict[str, tuple[str, ...]] = {
    "read": ("fd", "count"),
    "write": ("fd", "count"),
    "readv": ("fd", "count"),
    "writev": ("fd", "count"),
    "pread64": ("fd", "count", "offset"),
    "pwrite64": ("fd", "count", "offset"),
    "fsync": ("fd",),
    "fdatasync": ("fd",),
    "readahead": ("fd", "offset", "count"),
    "creat": ("path", "mode"),
    "open": ("path", "flags", "mode"),
    "openat": ("path", "flags", "mode"),
    "close": ("fd",),
    "lseek": ("fd", "offset", "whence"),
    "truncate": ("path", "count"),
    "ftruncate": ("fd", "count"),
    "rename": ("path", "new_path"),
    "renameat": ("path", "new_path"),
    "renameat2": ("path", "new_path", "flags"),
    "unlink": ("path",),
    "unlinkat": ("path", "flags"),
    "readlink": ("path", "count"),
    "readlinkat": ("path", "count"),
    "stat": ("path",),
    "lstat": ("path",),
    "fstat": ("fd",),
    "fstatfs": ("fd",),
    "fstatat": ("path", "flags"),
    "getxattr": ("path", "name", "count"),
    "lgetxattr": ("path", "name", "count"),
    "fgetxattr": ("fd", "name", "count"),
    "setxattr": ("path", "name", "count", "flags"),
    "lsetxattr": ("path", "name", "count", "flags"),
    "fsetxattr": ("fd", "name", "count", "flags"),
    "listxattr": ("path", "count"),
    "llistxattr": ("path", "count"),
    "flistxattr": ("fd", "count"),
    "removexattr": ("path", "name"),
    "lremovexattr": ("path", "name"),
    "fremovexattr": ("fd", "name"),
    "mknod": ("path", "mode"),
    "mknodat": ("path", "mode"),
}

assert set(ARG_FIELDS) == set(CATALOG)

# Kinds whose args carry an fd (used for fd-state tracking and tagging).
FD_KINDS = frozenset(k for k, f in ARG_FIELDS.items() if "fd" in f)
# Kinds that open a file and return a new fd in retval.
OPEN_KINDS = frozenset({"open", "openat", "creat"})
WRITE_KINDS = frozenset({"write", "writev", "pwrite64"})
READ_KINDS = frozenset({"read", "readv", "pread64"})


@dataclass(frozen=True, slots=True)
class SyscallKind:
    name: str
    category: Category


_KINDS: dict[str, SyscallKind] = {n: SyscallKind(n, c) for n, c in CATALOG.items()}


def catalog_lookup(name: str) -> SyscallKind:
    """Return the catalog member for `name` or raise NotInCatalog."""
    try:
        return _KINDS[name]
    except KeyError:
        raise NotInCatalog(f"{name!r} is not a supported syscall") from None


def catalog_members() -> tuple[SyscallKind, ...]:
    return tuple(_KINDS.values())


@dataclass(frozen=True, slots=True)
class FileTag:
    """Unique file-incarnation identity.

    Two incarnations of a reused inode differ in first_access and therefore
    compare unequal.
    """

    device: int
    inode: int
    first_access: int  # ns timestamp of the open/creat that minted the tag

    def as_dict(self) -> dict[str, int]:
        return {"dev": self.device, "ino": self.inode, "first_access": self.first_access}

    @classmethod
    def from_dict(cls, d: dict[str, int]) -> "FileTag":
        return cls(d["dev"], d["ino"], d["first_access"])


def tag_key(tag_dict: dict[str, int]) -> tuple[int, int, int]:
    """Hashable identity of a tag stored in record form."""
    return (tag_dict["dev"], tag_dict["ino"], tag_dict["first_access"])


@dataclass(frozen=True, slots=True)
class EnrichmentInfo:
    file_type: FileType = FileType.UNKNOWN
    offset_before: Optional[int] = None
    offset_after: Optional[int] = None
    tag: Optional[FileTag] = None
    resolved_path: Optional[str] = None

    def as_dict(self) -> dict[str, Any]:
        return {
            "file_type": self.file_type.value,
            "offset_before": self.offset_before,
            "offset_after": self.offset_after,
            "tag": self.tag.as_dict() if self.tag else None,
            "resolved_path": self.resolved_path,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EnrichmentInfo":
        tag = d.get("tag")
        return cls(
            file_type=FileType(d.get("file_type", "unknown")),
            offset_before=d.get("offset_before"),
            offset_after=d.get("offset_after"),
            tag=FileTag.from_dict(tag) if tag else None,
            resolved_path=d.get("resolved_path"),
        )


@dataclass(frozen=True, slots=True)
class FilterSpec:
    """Capture-side predicate; absent dimensions match everything."""

    kinds: Optional[frozenset[str]] = None
    pids: Optional[frozenset[int]] = None
    tids: Optional[frozenset[int]] = None
    path_prefixes: Optional[frozenset[str]] = None

    def __post_init__(self):
        for k in self.kinds or ():
            catalog_lookup(k)

    def is_match_all(self) -> bool:
        return (self.kinds is None and self.pids is None
                and self.tids is None and self.path_prefixes is None)

    def as_dict(self) -> dict[str, Any]:
        return {
            "kinds": sorted(self.kinds) if self.kinds is not None else None,
            "pids": sorted(self.pids) if self.pids is not None else None,
            "tids": sorted(self.tids) if self.tids is not None else None,
            "path_prefixes": sorted(self.path_prefixes) if self.path_prefixes is not None else None,
        }

    @classmethod
    def from_dict(cls, d: Optional[dict[str, Any]]) -> "FilterSpec":
        if not d:
            return cls()
        mk = lambda v: frozenset(v) if v is not None else None
        return cls(kinds=mk(d.get("kinds")), pids=mk(d.get("pids")),
                   tids=mk(d.get("tids")), path_prefixes=mk(d.get("path_prefixes")))


@dataclass
class SessionStats:
    produced: int = 0
    dropped: int = 0
    stored: int = 0
    unresolved: int = 0
    orphan_exits: int = 0
    inconsistencies: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "produced": self.produced, "dropped": self.dropped,
            "stored": self.stored, "unresolved": self.unresolved,
            "orphan_exits": self.orphan_exits,
            "inconsistencies": self.inconsistencies,
        }

    @classmethod
    def from_dict(cls, d: dict[str, int]) -> "SessionStats":
        return cls(**{k: d.get(k, 0) for k in
                      ("produced", "dropped", "stored", "unresolved",
                       "orphan_exits", "inconsistencies")})


@dataclass
class Session:
    name: str
    created_at: float
    filter: FilterSpec = field(default_factory=FilterSpec)
    stats: SessionStats = field(default_factory=SessionStats)


# Canonical record field order keeps serialized output deterministic.
_RECORD_FIELDS = ("session", "pid", "tid", "comm", "kind", "args", "ret",
                  "t_entry", "t_exit", "seq", "dev", "ino", "mode", "enrichment")


_ARG_SETS: dict[str, frozenset[str]] = {k: frozenset(v) for k, v in ARG_FIELDS.items()}
_KNOWN_TOP = frozenset(_RECORD_FIELDS) | {"dir"}


def validate_record(rec: dict[str, Any]) -> dict[str, Any]:
    """Check a parsed aggregated record in place; strip foreign fields.

    Raises ValueError on structural problems; NotInCatalog for unknown kinds.
    Unknown top-level and per-kind argument fields are dropped (parsers must
    ignore extras).
    """
    allowed = _ARG_SETS.get(rec.get("kind"))
    if allowed is None:
        kind = rec.get("kind")
        if not isinstance(kind, str):
            raise ValueError("missing or non-string 'kind'")
        raise NotInCatalog(f"{kind!r} is not a supported syscall")
    if type(rec.get("pid")) is not int or type(rec.get("tid")) is not int:
        raise ValueError("missing or non-integer 'pid'/'tid'")
    t_entry = rec.get("t_entry")
    t_exit = rec.get("t_exit")
    if type(t_entry) is not int:
        raise ValueError("missing or non-integer 't_entry'")
    if t_exit is not None:
        if type(t_exit) is not int:
            raise ValueError("non-integer 't_exit'")
        if t_exit < t_entry:
            raise ValueError("t_exit < t_entry")
    args = rec.get("args")
    if args is None:
        rec["args"] = {}
    elif not isinstance(args, dict):
        raise ValueError("'args' must be an object")
    else:
        for k in args.keys() - allowed:
            del args[k]
    comm = rec.get("comm")
    if comm is None:
        rec["comm"] = ""
    elif type(comm) is not str:
        rec["comm"] = str(comm)[:16]
    elif len(comm) > 16:
        rec["comm"] = comm[:16]
    rec.setdefault("session", "")
    rec.setdefault("ret", None)
    rec.setdefault("t_exit", None)
    for k in rec.keys() - _KNOWN_TOP:
        del rec[k]
    return rec


@dataclass(frozen=True, slots=True)
class SyscallEvent:
    """One fully-aggregated syscall occurrence (entry+exit merged)."""

    session: str
    pid: int
    tid: int
    comm: str
    kind: SyscallKind
    args: dict[str, Any]
    ret: Optional[int]
    t_entry: int
    t_exit: Optional[int]
    seq: Optional[int] = None
    enrichment: Optional[EnrichmentInfo] = None
    hints: Optional[dict[str, Any]] = None  # replay-provided mode/dev/ino

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "session": self.session, "pid": self.pid, "tid": self.tid,
            "comm": self.comm, "kind": self.kind.name, "args": dict(self.args),
            "ret": self.ret, "t_entry": self.t_entry, "t_exit": self.t_exit,
        }
        if self.seq is not None:
            rec["seq"] = self.seq
        for h in ("dev", "ino", "mode"):
            if self.hints and self.hints.get(h) is not None:
                rec[h] = self.hints[h]
        if self.enrichment is not None:
            rec["enrichment"] = self.enrichment.as_dict()
        return rec

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "SyscallEvent":
        rec = validate_record(rec)
        hints = {h: rec[h] for h in ("dev", "ino", "mode") if h in rec}
        enr = rec.get("enrichment")
        return cls(
            session=rec["session"], pid=rec["pid"], tid=rec["tid"],
            comm=rec["comm"], kind=catalog_lookup(rec["kind"]),
            args=rec["args"], ret=rec["ret"],
            t_entry=rec["t_entry"], t_exit=rec["t_exit"],
            seq=rec.get("seq"),
            enrichment=EnrichmentInfo.from_dict(enr) if enr else None,
            hints=hints or None,
        )
