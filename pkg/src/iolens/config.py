"""TOML configuration with flag > file > environment > default precedence."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .model import FilterSpec
from .ringbuf import DEFAULT_CAPACITY

STORE_DIR_ENV = "IOLENS_STORE_DIR"


@dataclass
class Config:
    session: Optional[str] = None
    syscalls: Optional[list[str]] = None
    pids: Optional[list[int]] = None
    tids: Optional[list[int]] = None
    paths: Optional[list[str]] = None
    ring_capacity_bytes: int = DEFAULT_CAPACITY
    ring_lanes: Optional[int] = None  # None: cpu count live, 1 replay
    store_dir: str = "./iolens-store"
    store_batch_size: int = 1000
    serve_host: str = "127.0.0.1"
    serve_port: int = 8321
    serve_refresh_interval_s: float = 1.0
    serve_cors_origins: list[str] = field(default_factory=lambda: ["*"])
    record_command: Optional[list[str]] = None

    def filter_spec(self) -> FilterSpec:
        mk = lambda v: frozenset(v) if v else None
        return FilterSpec(kinds=mk(self.syscalls), pids=mk(self.pids),
                          tids=mk(self.tids), path_prefixes=mk(self.paths))


def load_config(path: Optional[str] = None,
                overrides: Optional[dict[str, Any]] = None) -> Config:
    """Build a Config from defaults, env, an optional TOML file, and overrides."""
    cfg = Config()
    env_dir = os.environ.get(STORE_DIR_ENV)
    if env_dir:
        cfg.store_dir = env_dir
    if path is not None:
        data = tomllib.loads(Path(path).read_text())
        sess = data.get("session", {})
        if "name" in sess:
            cfg.session = str(sess["name"])
        filt = data.get("filters", {})
        if "syscalls" in filt:
            cfg.syscalls = [str(s) for s in filt["syscalls"]]
        if "pids" in filt:
            cfg.pids = [int(p) for p in filt["pids"]]
        if "tids" in filt:
            cfg.tids = [int(t) for t in filt["tids"]]
        if "paths" in filt:
            cfg.paths = [str(p) for p in filt["paths"]]
        ring = data.get("ring_buffer", {})
        if "capacity_bytes" in ring:
            cfg.ring_capacity_bytes = int(ring["capacity_bytes"])
        if "lanes" in ring:
            cfg.ring_lanes = int(ring["lanes"])
        st = data.get("store", {})
        if "dir" in st:
            cfg.store_dir = str(st["dir"])
        if "batch_size" in st:
            cfg.store_batch_size = int(st["batch_size"])
        srv = data.get("serve", {})
        if "host" in srv:
            cfg.serve_host = str(srv["host"])
        if "port" in srv:
            cfg.serve_port = int(srv["port"])
        if "refresh_interval_s" in srv:
            cfg.serve_refresh_interval_s = float(srv["refresh_interval_s"])
        if "cors_origins" in srv:
            cfg.serve_cors_origins = [str(o) for o in srv["cors_origins"]]
        rec = data.get("record", {})
        if "command" in rec:
            cfg.record_command = [str(a) for a in rec["command"]]
    for key, val in (overrides or {}).items():
        if val is not None:
            setattr(cfg, key, val)
    return cfg
