// Comparison view state: the table mirrors the CSV columns, the deviation
// filter defaults to 2 sigma, and the sort stays locked to the API's
// |percent change| descending order. Zero-variance rows carry a warning
// badge instead of being hidden. The CSV download is the API's bytes.

import type { ComparePayload, CompareRowPayload } from "./types.js";

export const DEFAULT_MIN_DEVIATION = 2.0;

export interface CompareViewRow {
  row: CompareRowPayload;
  zeroVarianceBadge: boolean;
}

export interface CompareView {
  baseRevision: string;
  candRevision: string;
  minDeviation: number;
  rows: CompareViewRow[];
  hiddenCount: number;
  skippedCount: number;
  empty: boolean;
}

function passesFilter(row: CompareRowPayload, minDeviation: number): boolean {
  if (row.zero_variance) return true; // surfaced with a badge, never silently dropped
  if (row.deviation === null) return false;
  return Math.abs(row.deviation) >= minDeviation;
}

/**
 * Build the view from an (unfiltered) API payload. Row order is preserved
 * from the payload — the API already sorts by |percent change| descending —
 * so hiding rows never re-ranks the survivors.
 */
export function buildCompareView(
  payload: ComparePayload,
  minDeviation: number = DEFAULT_MIN_DEVIATION,
): CompareView {
  const rows: CompareViewRow[] = [];
  let hidden = 0;
  for (const row of payload.rows) {
    if (passesFilter(row, minDeviation)) {
      rows.push({ row, zeroVarianceBadge: row.zero_variance });
    } else {
      hidden += 1;
    }
  }
  return {
    baseRevision: payload.base_revision,
    candRevision: payload.cand_revision,
    minDeviation,
    rows,
    hiddenCount: hidden,
    skippedCount: payload.skipped.length,
    empty: rows.length === 0,
  };
}

export function setMinDeviation(
  payload: ComparePayload,
  minDeviation: number,
): CompareView {
  return buildCompareView(payload, minDeviation);
}
