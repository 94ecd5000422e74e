// Timeline view: per-thread syscall counts over time buckets, rendered as an
// SVG multi-series chart with contention intervals shaded behind it. Both
// the series (aggregate) and the shaded intervals (findings endpoint) come
// from the API; this module only lays them out.

import type { AggregateRow, ContentionInterval } from "./api.js";
import { escapeHtml } from "./format.js";

export interface TimelineModel {
  bucketNs: number;
  buckets: number[];            // bucket start timestamps, ascending, complete
  series: { name: string; counts: number[] }[];  // top-N by activity + "other"
  intervals: { t_start: number; t_end: number }[];
  maxCount: number;
}

export function buildTimeline(
  rows: AggregateRow[],
  bucketNs: number,
  intervals: ContentionInterval[],
  topN = 12,
  namePrefix = "",
): TimelineModel {
  const byName = new Map<string, Map<number, number>>();
  let lo = Infinity;
  let hi = -Infinity;
  for (const r of rows) {
    const name = String(r.group.comm ?? "");
    if (namePrefix && !name.startsWith(namePrefix)) continue;
    if (r.bucket === null) continue;
    lo = Math.min(lo, r.bucket);
    hi = Math.max(hi, r.bucket);
    let m = byName.get(name);
    if (!m) byName.set(name, (m = new Map()));
    m.set(r.bucket, (m.get(r.bucket) ?? 0) + r.value);
  }
  if (!byName.size) {
    return { bucketNs, buckets: [], series: [], intervals: [], maxCount: 0 };
  }
  const buckets: number[] = [];
  for (let b = lo; b <= hi; b += bucketNs) buckets.push(b);

  const totals = [...byName.entries()]
    .map(([name, m]) => ({ name, total: [...m.values()].reduce((a, v) => a + v, 0) }))
    .sort((a, b) => b.total - a.total || a.name.localeCompare(b.name));
  const keep = totals.slice(0, topN).map((t) => t.name);
  const folded = totals.slice(topN).map((t) => t.name);

  const series = keep.map((name) => ({
    name,
    counts: buckets.map((b) => byName.get(name)!.get(b) ?? 0),
  }));
  if (folded.length) {
    const other = buckets.map((b) =>
      folded.reduce((acc, name) => acc + (byName.get(name)!.get(b) ?? 0), 0));
    series.push({ name: "other", counts: other });
  }
  const maxCount = Math.max(1, ...series.flatMap((s) => s.counts));
  return {
    bucketNs,
    buckets,
    series,
    intervals: intervals.map((iv) => ({ t_start: iv.t_start, t_end: iv.t_end })),
    maxCount,
  };
}

const PALETTE = ["#2563eb", "#dc2626", "#16a34a", "#9333ea", "#ea580c",
  "#0891b2", "#ca8a04", "#db2777", "#4f46e5", "#65a30d", "#0d9488", "#7c2d12",
  "#6b7280"];

const W = 960;
const H = 300;
const PAD = { left: 48, right: 12, top: 12, bottom: 24 };

function x(model: TimelineModel, t: number): number {
  const span = model.buckets.length * model.bucketNs || 1;
  const t0 = model.buckets[0] ?? 0;
  return PAD.left + ((t - t0) / span) * (W - PAD.left - PAD.right);
}

function y(model: TimelineModel, count: number): number {
  return H - PAD.bottom - (count / model.maxCount) * (H - PAD.top - PAD.bottom);
}

export function renderTimeline(model: TimelineModel): string {
  if (!model.buckets.length) {
    return `<p class="empty">No events in this session match the name filter.</p>`;
  }
  const shaded = model.intervals.map((iv) => {
    const x0 = x(model, iv.t_start);
    const x1 = x(model, iv.t_end);
    return `<rect class="contention" x="${x0.toFixed(1)}" y="${PAD.top}" `
      + `width="${(x1 - x0).toFixed(1)}" height="${H - PAD.top - PAD.bottom}" `
      + `fill="#dc2626" opacity="0.12"></rect>`;
  }).join("");
  const lines = model.series.map((s, i) => {
    const pts = s.counts.map((c, j) => {
      const px = x(model, model.buckets[j] + model.bucketNs / 2);
      return `${px.toFixed(1)},${y(model, c).toFixed(1)}`;
    }).join(" ");
    const color = PALETTE[i % PALETTE.length];
    return `<polyline data-name="${escapeHtml(s.name)}" points="${pts}" `
      + `fill="none" stroke="${color}" stroke-width="1.5"></polyline>`;
  }).join("");
  const legend = model.series.map((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    return `<span class="legend-item"><span class="swatch" `
      + `style="background:${color}"></span>${escapeHtml(s.name)}</span>`;
  }).join("");
  const t0 = model.buckets[0];
  const t1 = model.buckets[model.buckets.length - 1] + model.bucketNs;
  const axis = `<text x="${PAD.left}" y="${H - 6}" class="axis">${(t0 / 1e9).toFixed(0)}s</text>`
    + `<text x="${W - PAD.right}" y="${H - 6}" text-anchor="end" class="axis">${(t1 / 1e9).toFixed(0)}s</text>`
    + `<text x="4" y="${PAD.top + 10}" class="axis">${model.maxCount}</text>`
    + `<text x="4" y="${H - PAD.bottom}" class="axis">0</text>`;
  return `<svg viewBox="0 0 ${W} ${H}" class="timeline" role="img">`
    + shaded + lines + axis + `</svg><div class="legend">${legend}</div>`;
}
