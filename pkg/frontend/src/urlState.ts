// Board state lives in the URL so a reload (or a shared link) reproduces
// the exact view: filters, tab, and which groups are expanded.

import type { BoardState, BoardTab } from "./board.js";
import { DEFAULT_BOARD_STATE } from "./board.js";

export function encodeBoardState(state: BoardState): string {
  const params = new URLSearchParams();
  if (state.measurementRegex) params.set("m", state.measurementRegex);
  if (state.state) params.set("s", state.state);
  if (state.tab !== DEFAULT_BOARD_STATE.tab) params.set("t", state.tab);
  if (state.expanded.length > 0) params.set("x", state.expanded.join(","));
  return params.toString();
}

export function parseBoardState(query: string): BoardState {
  const params = new URLSearchParams(query);
  const tab = params.get("t");
  return {
    measurementRegex: params.get("m") ?? "",
    state: params.get("s") ?? "",
    tab: (tab === "legacy" || tab === "expanded" ? tab : DEFAULT_BOARD_STATE.tab) as BoardTab,
    expanded: (params.get("x") ?? "")
      .split(",")
      .filter((r) => r.length > 0),
  };
}
