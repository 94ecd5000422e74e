"""HTTP JSON interface over the store, correlation, and detectors."""

from __future__ import annotations

import base64
import time
from pathlib import Path
from typing import Optional

import msgspec
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .. import analyze, correlate
from ..errors import MalformedPattern, MalformedSpec, UnknownSession
from ..store import Store
from .schemas import (AggregateRequest, AggregateResponse, QueryRequest,
                      QueryResponse, ResolutionModel, SessionModel)


def _encode_cursor(offset: int) -> str:
    return base64.urlsafe_b64encode(str(offset).encode()).decode()


def _decode_cursor(cursor: Optional[str]) -> int:
    if not cursor:
        return 0
    try:
        return int(base64.urlsafe_b64decode(cursor.encode()))
    except Exception:
        raise HTTPException(status_code=400, detail="invalid cursor token")


def create_app(store_dir: str, refresh_interval: float = 1.0,
               cors_origins: Optional[list[str]] = None,
               dashboard_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="iolens", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"], allow_headers=["*"])

    store = Store(store_dir)
    app.state.store = store
    state = {"last_refresh": 0.0}

    def fresh_store() -> Store:
        now = time.monotonic()
        if now - state["last_refresh"] >= refresh_interval:
            store.refresh()
            state["last_refresh"] = now
        return store

    @app.exception_handler(RequestValidationError)
    async def validation_as_400(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(UnknownSession)
    async def unknown_session(request: Request, exc: UnknownSession):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(MalformedSpec)
    async def malformed_spec(request: Request, exc: MalformedSpec):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(MalformedPattern)
    async def malformed_pattern(request: Request, exc: MalformedPattern):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    def jsonbytes(payload) -> Response:
        return Response(content=msgspec.json.encode(payload),
                        media_type="application/json")

    @app.get("/sessions", response_model=list[SessionModel])
    def list_sessions():
        st = fresh_store()
        return [{"name": s.name, "created_at": s.created_at,
                 "stats": s.stats.as_dict()} for s in st.sessions()]

    @app.post("/sessions/{name}/query", response_model=QueryResponse)
    def query_session(name: str, body: QueryRequest):
        st = fresh_store()
        offset = _decode_cursor(body.cursor)
        spec = body.to_spec(name, offset)
        unpaged = st.query(spec, _paginate=False)
        total = len(unpaged)
        page = unpaged[offset:offset + body.limit]
        next_cursor = (_encode_cursor(offset + body.limit)
                       if offset + body.limit < total else None)
        events = [{k: v for k, v in d.items() if k != "_id"} | {"id": d["_id"]}
                  for d in page]
        return jsonbytes({"events": events, "total": total,
                          "next_cursor": next_cursor})

    @app.post("/sessions/{name}/aggregate", response_model=AggregateResponse)
    def aggregate_session(name: str, body: AggregateRequest):
        st = fresh_store()
        rows = st.aggregate(body.to_spec(name))
        return jsonbytes({"rows": rows})

    @app.post("/sessions/{name}/resolve", response_model=ResolutionModel)
    def resolve_session(name: str):
        st = fresh_store()
        lock = st.resolve_lock(name)
        if not lock.acquire(blocking=False):
            raise HTTPException(status_code=409,
                                detail=f"resolution already running for {name!r}")
        try:
            report = correlate.resolve_paths(st, name)
        finally:
            lock.release()
        return jsonbytes(report.as_dict())

    @app.get("/sessions/{name}/findings/{detector}")
    def findings(name: str, detector: str,
                 bucket_ns: int = analyze.DEFAULT_BUCKET_NS,
                 k_threshold: int = analyze.DEFAULT_K_THRESHOLD,
                 dip_threshold: float = analyze.DEFAULT_DIP_THRESHOLD,
                 background: str = "rocksdb:low*",
                 foreground: str = "db_bench*"):
        st = fresh_store()
        if detector == "stale-offset":
            out = [f.as_dict() for f in
                   analyze.detect_stale_offset_reads(st, name)]
        elif detector == "contention":
            out = [iv.as_dict() for iv in analyze.contention_report(
                st, name, bucket_ns=bucket_ns,
                background_name_pattern=background,
                foreground_name_pattern=foreground,
                k_threshold=k_threshold, dip_threshold=dip_threshold)]
        else:
            raise HTTPException(status_code=404,
                                detail=f"unknown detector {detector!r}")
        return jsonbytes({"detector": detector, "findings": out})

    @app.get("/sessions/{name}/summary")
    def summary(name: str):
        st = fresh_store()
        return jsonbytes(analyze.session_summary(st, name))

    if dashboard_dir and Path(dashboard_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=dashboard_dir, html=True),
                  name="dashboard")

    return app
