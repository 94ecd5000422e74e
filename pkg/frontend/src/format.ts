export function escapeHtml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function fmtSeconds(ns: number | null): string {
  return ns === null ? "—" : (ns / 1e9).toFixed(6);
}

export function fmtCount(n: number): string {
  return n.toLocaleString("en-US");
}

export function fmtPercent(x: number): string {
  return (100 * x).toFixed(1) + "%";
}
