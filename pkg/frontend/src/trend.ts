// Trend view state: one series as a line chart with change point markers
// and a pull-down of every measurement available for the test. Switching
// measurement swaps the series but keeps the test and the zoom window.

import type { TrendPayload } from "./types.js";

export interface ZoomWindow {
  start: number;
  end: number;
}

export interface TrendView {
  test: string;
  measurement: string;
  measurements: string[];
  points: { x: number; y: number; revision: string }[];
  markers: number[]; // x positions of change points
  zoom: ZoomWindow | null;
  empty: boolean;
}

export function buildTrendView(
  payload: TrendPayload,
  previous?: TrendView,
): TrendView {
  const keepZoom =
    previous && previous.test === payload.key.test ? previous.zoom : null;
  return {
    test: payload.key.test,
    measurement: payload.measurement,
    measurements: [...payload.available_measurements],
    points: payload.points.map((p) => ({
      x: p.order,
      y: p.value,
      revision: p.revision,
    })),
    markers: payload.change_points.map((cp) => cp.order_index),
    zoom: keepZoom,
    empty: payload.points.length === 0,
  };
}

export function setZoom(view: TrendView, zoom: ZoomWindow | null): TrendView {
  return { ...view, zoom };
}

/** Points restricted to the zoom window (all points when not zoomed). */
export function visiblePoints(view: TrendView): TrendView["points"] {
  if (!view.zoom) return view.points;
  const { start, end } = view.zoom;
  return view.points.filter((p) => p.x >= start && p.x <= end);
}
