// View state <-> URL round-trip: every filter, the active session, bucket
// width, sort order and evidence selection live in the hash so a diagnosis
// can be shared as a link.

export type ViewName = "table" | "timeline" | "findings";

export interface ViewState {
  session: string | null;
  view: ViewName;
  kinds: string[];          // table: kind in-set filter
  comm: string;             // table: exact proc-name filter
  pathPrefix: string;       // table: resolved-path prefix filter
  sortField: string;
  sortDir: "asc" | "desc";
  cursor: string | null;    // table pagination
  bucketSec: number;        // timeline bucket width
  namePrefix: string;       // timeline thread-name prefix filter
  topN: number;             // timeline series cap (rest folds into "other")
  detector: "stale-offset" | "contention";
  evidence: number[] | null; // findings click-through -> table id filter
}

export const DEFAULT_STATE: ViewState = {
  session: null,
  view: "table",
  kinds: [],
  comm: "",
  pathPrefix: "",
  sortField: "t_entry",
  sortDir: "asc",
  cursor: null,
  bucketSec: 1,
  namePrefix: "",
  topN: 12,
  detector: "stale-offset",
  evidence: null,
};

const VIEWS: ViewName[] = ["table", "timeline", "findings"];

export function encodeState(s: ViewState): string {
  const p = new URLSearchParams();
  if (s.session) p.set("session", s.session);
  if (s.view !== "table") p.set("view", s.view);
  if (s.kinds.length) p.set("kinds", s.kinds.join(","));
  if (s.comm) p.set("comm", s.comm);
  if (s.pathPrefix) p.set("path", s.pathPrefix);
  if (s.sortField !== "t_entry" || s.sortDir !== "asc") {
    p.set("sort", `${s.sortField}:${s.sortDir}`);
  }
  if (s.cursor) p.set("cursor", s.cursor);
  if (s.bucketSec !== 1) p.set("bucket", String(s.bucketSec));
  if (s.namePrefix) p.set("names", s.namePrefix);
  if (s.topN !== 12) p.set("top", String(s.topN));
  if (s.detector !== "stale-offset") p.set("detector", s.detector);
  if (s.evidence && s.evidence.length) p.set("evidence", s.evidence.join(","));
  const q = p.toString();
  return q ? `#${q}` : "#";
}

export function decodeState(hash: string): ViewState {
  const s: ViewState = { ...DEFAULT_STATE, kinds: [], evidence: null };
  const p = new URLSearchParams(hash.replace(/^#/, ""));
  s.session = p.get("session");
  const view = p.get("view");
  if (view && (VIEWS as string[]).includes(view)) s.view = view as ViewName;
  const kinds = p.get("kinds");
  if (kinds) s.kinds = kinds.split(",").filter(Boolean);
  s.comm = p.get("comm") ?? "";
  s.pathPrefix = p.get("path") ?? "";
  const sort = p.get("sort");
  if (sort) {
    const [field, dir] = sort.split(":");
    if (field) s.sortField = field;
    if (dir === "desc" || dir === "asc") s.sortDir = dir;
  }
  s.cursor = p.get("cursor");
  const bucket = Number(p.get("bucket"));
  if (bucket > 0) s.bucketSec = bucket;
  s.namePrefix = p.get("names") ?? "";
  const top = Number(p.get("top"));
  if (top > 0) s.topN = top;
  if (p.get("detector") === "contention") s.detector = "contention";
  const ev = p.get("evidence");
  if (ev) {
    const ids = ev.split(",").map(Number).filter((n) => Number.isInteger(n));
    if (ids.length) s.evidence = ids;
  }
  return s;
}
