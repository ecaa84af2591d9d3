/** Contribution legend: a stacked proportion bar per feedback version.
 *
 * The bar renders the server-computed breakdown as-is; no proportions are
 * recomputed client-side. Segment widths are the raw proportions times
 * 100, so they match the API payload exactly, and the modification-extent
 * indicator rounds to whole percent only for display.
 */
import type { BreakdownPayload, Source } from "./types.js";

export const SOURCE_ORDER: readonly Source[] = ["gpt", "gemini", "llama", "teacher"];

// Fixed per-source colors, identical to the table in the service README
// so histories read consistently across sessions.
export const SOURCE_COLORS: Readonly<Record<Source, string>> = {
  gpt: "#7aa2f7",
  gemini: "#9ece6a",
  llama: "#e0af68",
  teacher: "#c0caf5",
};

export interface LegendSegment {
  source: Source;
  color: string;
  widthPercent: number;
}

export function legendSegments(breakdown: BreakdownPayload): LegendSegment[] {
  return SOURCE_ORDER.map((source) => ({
    source,
    color: SOURCE_COLORS[source],
    widthPercent: (breakdown.proportions[source] ?? 0) * 100,
  }));
}

export function extentPercent(breakdown: BreakdownPayload): number {
  return Math.round(breakdown.teacher_modification_extent * 100);
}

function formatWidth(widthPercent: number): string {
  // Four decimals keeps the CSS width within a hundredth of a percentage
  // point of the API value without trailing-zero noise.
  return String(Number(widthPercent.toFixed(4)));
}

export function renderLegendBar(breakdown: BreakdownPayload): string {
  const segments = legendSegments(breakdown)
    .map((seg) => {
      const width = formatWidth(seg.widthPercent);
      return (
        `<span class="legend-segment" data-source="${seg.source}" ` +
        `style="width:${width}%;background:${seg.color}" ` +
        `title="${seg.source} ${width}%"></span>`
      );
    })
    .join("");
  const extent = extentPercent(breakdown);
  return (
    `<div class="legend"><div class="legend-bar">${segments}</div>` +
    `<span class="legend-extent" data-extent="${extent}">` +
    `teacher modification ${extent}%</span></div>`
  );
}

/** Textual labels next to the bar; uses the server's integer display
 * percentages when present rather than re-rounding. */
export function renderLegendLabels(breakdown: BreakdownPayload): string {
  const display = breakdown.display_percentages;
  return SOURCE_ORDER.map((source) => {
    const pct = display
      ? (display[source] ?? 0)
      : Math.round((breakdown.proportions[source] ?? 0) * 100);
    return (
      `<span class="legend-label" data-source="${source}">` +
      `<i style="background:${SOURCE_COLORS[source]}"></i>${source} ${pct}%</span>`
    );
  }).join(" ");
}
