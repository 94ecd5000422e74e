// Typed client for the iolens HTTP API. Every chart and table in the
// dashboard is backed by these calls; nothing is recomputed from raw events
// client-side beyond the page being displayed.

export interface Predicate {
  field: string;
  op: "eq" | "in" | "prefix" | "range";
  value?: unknown;
  lo?: number;
  hi?: number;
}

export interface QueryRequest {
  match?: Predicate[];
  time_range?: [number, number] | null;
  sort?: { field: string; direction: "asc" | "desc" } | null;
  limit?: number;
  cursor?: string | null;
}

export interface EventRecord {
  id: number;
  session: string;
  pid: number;
  tid: number;
  comm: string;
  kind: string;
  args: Record<string, unknown>;
  ret: number | null;
  t_entry: number;
  t_exit: number | null;
  seq?: number;
  enrichment?: {
    file_type: string;
    offset_before: number | null;
    offset_after: number | null;
    tag: { dev: number; ino: number; first_access: number } | null;
    resolved_path: string | null;
  };
}

export interface QueryResponse {
  events: EventRecord[];
  total: number;
  next_cursor: string | null;
}

export interface AggregateRequest {
  group_by?: string[];
  bucket_ns?: number | null;
  metric?: "count" | "sum" | "percentile";
  metric_field?: string | null;
  percentile?: number | null;
  top_n?: number | null;
  match?: Predicate[];
}

export interface AggregateRow {
  group: Record<string, string | number | null>;
  bucket: number | null;
  value: number;
}

export interface SessionInfo {
  name: string;
  created_at: number;
  stats: {
    produced: number;
    dropped: number;
    stored: number;
    unresolved: number;
    orphan_exits: number;
    inconsistencies: number;
  };
}

export interface StaleOffsetFinding {
  path: string;
  old_tag: { dev: number; ino: number; first_access: number };
  new_tag: { dev: number; ino: number; first_access: number };
  erroneous_offset: number;
  bytes_written_to_new: number;
  bytes_read_before_loss: number;
  evidence: number[];
}

export interface ContentionInterval {
  t_start: number;
  t_end: number;
  active_background_threads: number;
  foreground_rate: number;
  baseline_foreground_rate: number;
  dip_fraction: number;
}

export interface FindingsResponse<T> {
  detector: string;
  findings: T[];
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

/** Fetch wrapper that aborts a still-running request for the same slot when
 * a newer one supersedes it (stale responses never reach the views). */
export class ApiClient {
  private inflight = new Map<string, AbortController>();

  constructor(
    private base: string = "",
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async request<T>(slot: string, path: string, init?: RequestInit): Promise<T> {
    this.inflight.get(slot)?.abort();
    const ctl = new AbortController();
    this.inflight.set(slot, ctl);
    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + path, { ...init, signal: ctl.signal });
    } finally {
      if (this.inflight.get(slot) === ctl) this.inflight.delete(slot);
    }
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const body = await resp.json();
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  sessions(): Promise<SessionInfo[]> {
    return this.request("sessions", "/sessions");
  }

  query(session: string, body: QueryRequest): Promise<QueryResponse> {
    return this.request("query", `/sessions/${encodeURIComponent(session)}/query`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  aggregate(session: string, body: AggregateRequest): Promise<{ rows: AggregateRow[] }> {
    return this.request("aggregate", `/sessions/${encodeURIComponent(session)}/aggregate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  findings<T>(session: string, detector: string, params?: Record<string, string | number>): Promise<FindingsResponse<T>> {
    const qs = params
      ? "?" + new URLSearchParams(Object.fromEntries(
          Object.entries(params).map(([k, v]) => [k, String(v)]))).toString()
      : "";
    return this.request(
      "findings",
      `/sessions/${encodeURIComponent(session)}/findings/${encodeURIComponent(detector)}${qs}`,
    );
  }

  summary(session: string): Promise<Record<string, unknown>> {
    return this.request("summary", `/sessions/${encodeURIComponent(session)}/summary`);
  }
}
