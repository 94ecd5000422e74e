// Findings view: detector results with click-through to the evidence events.

import type { ContentionInterval, StaleOffsetFinding } from "./api.js";
import { escapeHtml, fmtPercent } from "./format.js";

export function renderStaleOffset(findings: StaleOffsetFinding[]): string {
  if (!findings.length) {
    return `<p class="empty">No stale-offset findings in this session.</p>`;
  }
  const rows = findings.map((f, i) => `<tr>`
    + `<td class="path">${escapeHtml(f.path)}</td>`
    + `<td class="num">ino ${f.old_tag.ino} @ ${(f.old_tag.first_access / 1e9).toFixed(3)}s</td>`
    + `<td class="num">ino ${f.new_tag.ino} @ ${(f.new_tag.first_access / 1e9).toFixed(3)}s</td>`
    + `<td class="num">${f.erroneous_offset}</td>`
    + `<td class="num">${f.bytes_written_to_new}</td>`
    + `<td class="num">${f.bytes_read_before_loss}</td>`
    + `<td><button class="evidence" data-idx="${i}">view ${f.evidence.length} events</button></td>`
    + `</tr>`).join("");
  return `<table class="findings"><thead><tr>`
    + `<th>path</th><th>old incarnation</th><th>new incarnation</th>`
    + `<th>read offset</th><th>bytes written</th><th>bytes read before loss</th>`
    + `<th>evidence</th></tr></thead><tbody>${rows}</tbody></table>`;
}

export function renderContention(findings: ContentionInterval[]): string {
  if (!findings.length) {
    return `<p class="empty">No contention intervals in this session.</p>`;
  }
  const rows = findings.map((f) => `<tr>`
    + `<td class="num">${(f.t_start / 1e9).toFixed(0)}s</td>`
    + `<td class="num">${(f.t_end / 1e9).toFixed(0)}s</td>`
    + `<td class="num">${f.active_background_threads}</td>`
    + `<td class="num">${f.foreground_rate.toFixed(1)}</td>`
    + `<td class="num">${f.baseline_foreground_rate.toFixed(1)}</td>`
    + `<td class="num">${fmtPercent(f.dip_fraction)}</td>`
    + `</tr>`).join("");
  return `<p class="note">Latency correlation is external: intervals mark `
    + `background-thread I/O bursts coinciding with a foreground syscall-rate dip.</p>`
    + `<table class="findings"><thead><tr>`
    + `<th>start</th><th>end</th><th>bg threads</th><th>fg rate</th>`
    + `<th>baseline</th><th>dip</th></tr></thead><tbody>${rows}</tbody></table>`;
}
