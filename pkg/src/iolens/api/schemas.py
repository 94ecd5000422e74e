"""Request/response models for the HTTP API."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

from ..store import AggSpec, Predicate, QuerySpec

DEFAULT_PAGE_SIZE = 500


class PredicateModel(BaseModel):
    field: str
    op: Literal["eq", "in", "prefix", "range"]
    value: Any = None
    lo: Optional[float] = None
    hi: Optional[float] = None

    def to_predicate(self) -> Predicate:
        return Predicate(field=self.field, op=self.op, value=self.value,
                         lo=self.lo, hi=self.hi)


class SortModel(BaseModel):
    field: str = "t_entry"
    direction: Literal["asc", "desc"] = "asc"


class QueryRequest(BaseModel):
    match: list[PredicateModel] = Field(default_factory=list)
    time_range: Optional[tuple[int, int]] = None
    sort: Optional[SortModel] = None
    limit: int = Field(default=DEFAULT_PAGE_SIZE, ge=1, le=10_000)
    cursor: Optional[str] = None

    def to_spec(self, session: str, offset: int) -> QuerySpec:
        return QuerySpec(
            session=session,
            match=[p.to_predicate() for p in self.match],
            time_range=self.time_range,
            sort=(self.sort.field, self.sort.direction) if self.sort else None,
            limit=self.limit,
            offset=offset)


class QueryResponse(BaseModel):
    events: list[dict[str, Any]]
    total: int
    next_cursor: Optional[str] = None


class AggregateRequest(BaseModel):
    group_by: list[str] = Field(default_factory=list)
    bucket_ns: Optional[int] = None
    metric: Literal["count", "sum", "percentile"] = "count"
    metric_field: Optional[str] = None
    percentile: Optional[float] = None
    top_n: Optional[int] = None
    match: list[PredicateModel] = Field(default_factory=list)
    time_range: Optional[tuple[int, int]] = None

    def to_spec(self, session: str) -> AggSpec:
        return AggSpec(
            session=session, group_by=self.group_by, bucket_ns=self.bucket_ns,
            metric=self.metric, metric_field=self.metric_field,
            percentile=self.percentile, top_n=self.top_n,
            match=[p.to_predicate() for p in self.match],
            time_range=self.time_range)


class AggregateRow(BaseModel):
    group: dict[str, Any]
    bucket: Optional[int]
    value: float | int


class AggregateResponse(BaseModel):
    rows: list[AggregateRow]


class SessionStatsModel(BaseModel):
    produced: int
    dropped: int
    stored: int
    unresolved: int
    orphan_exits: int
    inconsistencies: int


class SessionModel(BaseModel):
    name: str
    created_at: float
    stats: SessionStatsModel


class ResolutionModel(BaseModel):
    resolved: int
    unresolved: int
    conflicts: int
    fraction_unresolved: float
