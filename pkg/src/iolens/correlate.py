"""File-path correlation: translate file tags into the paths they were opened as."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .model import OPEN_KINDS, tag_key
from .store import Store


@dataclass
class ResolutionReport:
    resolved: int = 0
    unresolved: int = 0
    conflicts: int = 0

    @property
    def fraction_unresolved(self) -> float:
        total = self.resolved + self.unresolved
        return self.unresolved / total if total else 0.0

    def as_dict(self) -> dict[str, Any]:
        return {"resolved": self.resolved, "unresolved": self.unresolved,
                "conflicts": self.conflicts,
                "fraction_unresolved": self.fraction_unresolved}


def _opening_paths(docs) -> dict[tuple, list[tuple[int, int, str]]]:
    """tag key -> [(t_entry, id, path)] over open/openat/creat events."""
    opens: dict[tuple, list[tuple[int, int, str]]] = {}
    for doc in docs:
        if doc["kind"] not in OPEN_KINDS:
            continue
        enr = doc.get("enrichment")
        tag = enr.get("tag") if enr else None
        path = doc["args"].get("path")
        if tag and path:
            opens.setdefault(tag_key(tag), []).append((doc["t_entry"], doc["_id"], path))
    return opens


def resolve_paths(store: Store, session: str) -> ResolutionReport:
    """Set enrichment.resolved_path on every tagged event whose tag has an
    observed open; earliest open wins when a tag was opened under several
    paths. Idempotent: a second run changes nothing.
    """
    with store.resolve_lock(session):
        docs = store.iter_docs(session)
        opens = _opening_paths(docs)
        chosen: dict[tuple, str] = {}
        conflicts = 0
        for key, lst in opens.items():
            lst.sort()
            chosen[key] = lst[0][2]
            if len({p for _, _, p in lst}) > 1:
                conflicts += 1

        report = ResolutionReport(conflicts=conflicts)
        pending: dict[tuple[tuple, str], list[int]] = {}
        for doc in docs:
            enr = doc.get("enrichment")
            tag = enr.get("tag") if enr else None
            if not tag:
                continue
            key = tag_key(tag)
            path = chosen.get(key)
            if path is None:
                report.unresolved += 1
                continue
            report.resolved += 1
            if enr.get("resolved_path") != path:
                pending.setdefault((key, path), []).append(doc["_id"])
        if pending:
            store.apply_updates(session, [
                ("enrichment.resolved_path", path, ids)
                for (_, path), ids in sorted(pending.items())])
        store.update_session_stats(session, unresolved=report.unresolved)
        return report


def resolution_conflicts(store: Store, session: str) -> list[dict[str, Any]]:
    """Tags opened under more than one path, with the path resolution chose."""
    opens = _opening_paths(store.iter_docs(session))
    out = []
    for key, lst in sorted(opens.items()):
        lst.sort()
        paths = sorted({p for _, _, p in lst})
        if len(paths) > 1:
            out.append({"tag": {"dev": key[0], "ino": key[1], "first_access": key[2]},
                        "paths": paths, "chosen": lst[0][2]})
    return out
