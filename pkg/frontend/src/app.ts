// Application shell: session picker, filter bar, view switching, polling.
// State lives in the URL hash; every data element on screen is the response
// of an API call for the current state.

import { ApiClient, ApiError } from "./api.js";
import type {
  ContentionInterval, QueryResponse, SessionInfo, StaleOffsetFinding,
} from "./api.js";
import { escapeHtml, fmtCount, fmtPercent } from "./format.js";
import { renderContention, renderStaleOffset } from "./findings.js";
import { DEFAULT_STATE, decodeState, encodeState, ViewState } from "./state.js";
import { renderTable, tableRequest, toRow } from "./table.js";
import { buildTimeline, renderTimeline } from "./timeline.js";

const KIND_CHOICES = ["open", "openat", "creat", "close", "read", "write",
  "pread64", "pwrite64", "lseek", "unlink", "fsync", "truncate"];

export class App {
  state: ViewState = { ...DEFAULT_STATE };
  sessions: SessionInfo[] = [];
  lastError = "";
  private staleFindings: StaleOffsetFinding[] = [];
  private pollTimer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private win: { location: { hash: string }; addEventListener?: Window["addEventListener"] },
  ) {
    root.addEventListener("click", (ev) => this.onClick(ev as MouseEvent));
    root.addEventListener("change", (ev) => this.onChange(ev));
    win.addEventListener?.("hashchange", () => {
      this.state = decodeState(this.win.location.hash);
      void this.refresh();
    });
  }

  /** Re-read state from the URL and redraw everything. */
  async start(): Promise<void> {
    this.state = decodeState(this.win.location.hash);
    await this.refresh();
  }

  setState(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    const hash = encodeState(this.state);
    if (this.win.location.hash !== hash) this.win.location.hash = hash;
    void this.refresh();
  }

  startPolling(intervalMs = 2000): void {
    this.pollTimer ??= setInterval(() => void this.refresh(), intervalMs);
  }

  stopPolling(): void {
    if (this.pollTimer) clearInterval(this.pollTimer);
    this.pollTimer = null;
  }

  async refresh(): Promise<void> {
    this.lastError = "";
    let contentHtml: string;
    try {
      this.sessions = await this.api.sessions();
      if (!this.state.session && this.sessions.length) {
        this.state.session = this.sessions[0].name;
      }
      contentHtml = await this.renderActiveView();
    } catch (e) {
      if ((e as Error).name === "AbortError") return; // superseded by newer state
      this.lastError = e instanceof ApiError ? `API error ${e.status}: ${e.message}`
        : String(e);
      contentHtml = "";
    }
    this.root.innerHTML = this.shell(contentHtml);
  }

  private async renderActiveView(): Promise<string> {
    const s = this.state;
    if (!s.session) return `<p class="empty">No sessions in the store yet.</p>`;
    if (s.view === "table") {
      const resp: QueryResponse = await this.api.query(s.session, tableRequest(s));
      const pager = this.renderPager(resp);
      return renderTable(resp.events.map(toRow), s) + pager;
    }
    if (s.view === "timeline") {
      const [agg, findings] = [
        await this.api.aggregate(s.session, {
          group_by: ["comm"],
          bucket_ns: Math.round(s.bucketSec * 1e9),
          match: s.namePrefix ? [{ field: "comm", op: "prefix", value: s.namePrefix }] : [],
        }),
        await this.api.findings<ContentionInterval>(s.session, "contention", {
          bucket_ns: Math.round(s.bucketSec * 1e9),
        }),
      ];
      const model = buildTimeline(agg.rows, Math.round(s.bucketSec * 1e9),
        findings.findings, s.topN, s.namePrefix);
      return renderTimeline(model);
    }
    if (s.detector === "stale-offset") {
      const resp = await this.api.findings<StaleOffsetFinding>(s.session, "stale-offset");
      this.staleFindings = resp.findings;
      return renderStaleOffset(resp.findings);
    }
    const resp = await this.api.findings<ContentionInterval>(s.session, "contention", {
      bucket_ns: Math.round(s.bucketSec * 1e9),
    });
    return renderContention(resp.findings);
  }

  private renderPager(resp: QueryResponse): string {
    const shown = resp.events.length;
    const next = resp.next_cursor
      ? `<button id="next-page" data-cursor="${escapeHtml(resp.next_cursor)}">next page</button>`
      : "";
    const back = this.state.cursor ? `<button id="first-page">first page</button>` : "";
    return `<div class="pager">${fmtCount(shown)} of ${fmtCount(resp.total)} events `
      + `${back} ${next}</div>`;
  }

  private shell(content: string): string {
    const s = this.state;
    const options = this.sessions.map((x) => {
      const unresolved = x.stats.stored
        ? fmtPercent(x.stats.unresolved / x.stats.stored) : "0.0%";
      const label = `${x.name} — ${fmtCount(x.stats.stored)} events, `
        + `${fmtCount(x.stats.dropped)} dropped, ${unresolved} unresolved`;
      const sel = x.name === s.session ? " selected" : "";
      return `<option value="${escapeHtml(x.name)}"${sel}>${escapeHtml(label)}</option>`;
    }).join("");
    const tabs = (["table", "timeline", "findings"] as const).map((v) =>
      `<button class="tab${v === s.view ? " active" : ""}" data-view="${v}">${v}</button>`,
    ).join("");
    const kindBoxes = KIND_CHOICES.map((k) =>
      `<label><input type="checkbox" class="kind" value="${k}"`
      + `${s.kinds.includes(k) ? " checked" : ""}/>${k}</label>`).join("");
    const evidenceNote = s.evidence
      ? `<span class="chip">evidence filter: ${s.evidence.length} events `
        + `<button id="clear-evidence">×</button></span>`
      : "";
    const filterBar = s.view === "table"
      ? `<div class="filters">
          <input id="comm" placeholder="proc name (exact)" value="${escapeHtml(s.comm)}"/>
          <input id="path" placeholder="path prefix" value="${escapeHtml(s.pathPrefix)}"/>
          <details><summary>kinds${s.kinds.length ? ` (${s.kinds.length})` : ""}</summary>
            <div class="kinds">${kindBoxes}</div></details>
          ${evidenceNote}
        </div>`
      : s.view === "timeline"
        ? `<div class="filters">
            <label>bucket <input id="bucket" type="number" min="0.1" step="0.1"
              value="${s.bucketSec}"/> s</label>
            <input id="names" placeholder="thread name prefix" value="${escapeHtml(s.namePrefix)}"/>
            <label>top <input id="topn" type="number" min="1" max="50" value="${s.topN}"/></label>
          </div>`
        : `<div class="filters">
            <select id="detector">
              <option value="stale-offset"${s.detector === "stale-offset" ? " selected" : ""}>stale-offset data loss</option>
              <option value="contention"${s.detector === "contention" ? " selected" : ""}>I/O contention</option>
            </select>
          </div>`;
    const error = this.lastError
      ? `<div class="error" role="alert">${escapeHtml(this.lastError)}</div>` : "";
    return `<header>
        <h1>iolens</h1>
        <select id="session-picker">${options || "<option>—</option>"}</select>
        <nav>${tabs}</nav>
      </header>
      ${filterBar}
      ${error}
      <main id="content">${content}</main>`;
  }

  // -- interaction ----------------------------------------------------------

  private onClick(ev: MouseEvent): void {
    const target = ev.target as HTMLElement;
    const tab = target.closest?.("[data-view]") as HTMLElement | null;
    if (tab) {
      this.setState({ view: tab.dataset.view as ViewState["view"], cursor: null });
      return;
    }
    const th = target.closest?.("th.sortable") as HTMLElement | null;
    if (th && th.dataset.sort) {
      const field = th.dataset.sort;
      const dir = this.state.sortField === field && this.state.sortDir === "asc"
        ? "desc" : "asc";
      this.setState({ sortField: field, sortDir: dir, cursor: null });
      return;
    }
    if (target.id === "next-page") {
      this.setState({ cursor: target.dataset.cursor ?? null });
      return;
    }
    if (target.id === "first-page") {
      this.setState({ cursor: null });
      return;
    }
    if (target.id === "clear-evidence") {
      this.setState({ evidence: null });
      return;
    }
    if (target.classList?.contains("evidence")) {
      const f = this.staleFindings[Number(target.dataset.idx)];
      if (f) {
        this.setState({ view: "table", evidence: f.evidence, cursor: null,
                        kinds: [], comm: "", pathPrefix: "" });
      }
    }
  }

  private onChange(ev: Event): void {
    const el = ev.target as HTMLInputElement | HTMLSelectElement;
    switch (el.id) {
      case "session-picker":
        this.setState({ session: el.value, cursor: null, evidence: null });
        return;
      case "comm":
        this.setState({ comm: el.value, cursor: null });
        return;
      case "path":
        this.setState({ pathPrefix: el.value, cursor: null });
        return;
      case "bucket": {
        const v = Number(el.value);
        if (v > 0) this.setState({ bucketSec: v });
        return;
      }
      case "names":
        this.setState({ namePrefix: el.value });
        return;
      case "topn": {
        const v = Number(el.value);
        if (v > 0) this.setState({ topN: v });
        return;
      }
      case "detector":
        this.setState({ detector: el.value as ViewState["detector"] });
        return;
    }
    if ((el as HTMLInputElement).classList?.contains("kind")) {
      const box = el as HTMLInputElement;
      const kinds = new Set(this.state.kinds);
      if (box.checked) kinds.add(box.value);
      else kinds.delete(box.value);
      this.setState({ kinds: [...kinds].sort(), cursor: null });
    }
  }
}
