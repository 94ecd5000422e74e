// Event table view: the tabular trace representation (time, comm, pid/tid,
// kind, path, offset, bytes, retval). Sorting and filtering happen
// server-side; this module only shapes one received page for display.

import type { EventRecord, Predicate, QueryRequest } from "./api.js";
import { escapeHtml, fmtSeconds } from "./format.js";
import type { ViewState } from "./state.js";

export interface TableRow {
  id: number;
  time: string;
  comm: string;
  pidTid: string;
  kind: string;
  path: string;
  offset: string;
  bytes: string;
  retval: string;
}

export const COLUMNS: { key: string; label: string; sortField: string | null }[] = [
  { key: "time", label: "time", sortField: "t_entry" },
  { key: "comm", label: "comm", sortField: "comm" },
  { key: "pidTid", label: "pid/tid", sortField: "tid" },
  { key: "kind", label: "kind", sortField: "kind" },
  { key: "path", label: "path", sortField: "enrichment.resolved_path" },
  { key: "offset", label: "offset", sortField: "enrichment.offset_before" },
  { key: "bytes", label: "bytes", sortField: "ret" },
  { key: "retval", label: "retval", sortField: "ret" },
];

export function toRow(ev: EventRecord): TableRow {
  const enr = ev.enrichment;
  const path = enr?.resolved_path
    ?? (typeof ev.args.path === "string" ? ev.args.path : null)
    ?? (ev.args.fd !== undefined && ev.args.fd !== null ? `fd=${ev.args.fd}` : "—");
  const offset = enr && enr.offset_before !== null ? String(enr.offset_before) : "—";
  const isData = ev.ret !== null && ev.ret >= 0 && "count" in ev.args;
  return {
    id: ev.id,
    time: fmtSeconds(ev.t_entry),
    comm: ev.comm,
    pidTid: `${ev.pid}/${ev.tid}`,
    kind: ev.kind,
    path,
    offset,
    bytes: isData ? String(ev.ret) : "—",
    retval: ev.ret === null ? "—" : String(ev.ret),
  };
}

/** The QuerySpec this view is backed by, composed from the filter bar. */
export function tableRequest(state: ViewState): QueryRequest {
  const match: Predicate[] = [];
  if (state.kinds.length) match.push({ field: "kind", op: "in", value: state.kinds });
  if (state.comm) match.push({ field: "comm", op: "eq", value: state.comm });
  if (state.pathPrefix) {
    match.push({ field: "enrichment.resolved_path", op: "prefix", value: state.pathPrefix });
  }
  if (state.evidence) match.push({ field: "_id", op: "in", value: state.evidence });
  return {
    match,
    sort: { field: state.sortField, direction: state.sortDir },
    limit: 500,
    cursor: state.cursor,
  };
}

export function renderTable(rows: TableRow[], state: ViewState): string {
  if (!rows.length) {
    return `<p class="empty">No events match the current filters.</p>`;
  }
  const head = COLUMNS.map((c) => {
    const active = c.sortField === state.sortField;
    const arrow = active ? (state.sortDir === "asc" ? " ▲" : " ▼") : "";
    const cls = c.sortField ? ` class="sortable${active ? " sorted" : ""}"` : "";
    return `<th${cls} data-sort="${c.sortField ?? ""}">${c.label}${arrow}</th>`;
  }).join("");
  const body = rows.map((r) => `<tr data-id="${r.id}">`
    + `<td class="num">${r.time}</td>`
    + `<td>${escapeHtml(r.comm)}</td>`
    + `<td class="num">${r.pidTid}</td>`
    + `<td><code>${escapeHtml(r.kind)}</code></td>`
    + `<td class="path">${escapeHtml(r.path)}</td>`
    + `<td class="num">${r.offset}</td>`
    + `<td class="num">${r.bytes}</td>`
    + `<td class="num">${r.retval}</td>`
    + `</tr>`).join("");
  return `<table class="events"><thead><tr>${head}</tr></thead>`
    + `<tbody>${body}</tbody></table>`;
}
