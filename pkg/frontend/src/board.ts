// Triage board view state: one collapsed row per revision group, expandable
// to the member change points, with the measurement regex filter round-
// tripping to the API and failures surfacing inline without losing rows.

import { ApiClient, ApiError } from "./api.js";
import type { ChangePointPayload, GroupsPayload } from "./types.js";

export type BoardTab = "legacy" | "expanded";

// The legacy page predates per-operation metrics; it only knows these.
export const LEGACY_MEASUREMENTS = ["Throughput", "AverageLatency"];

export interface BoardState {
  measurementRegex: string;
  state: string;
  tab: BoardTab;
  expanded: string[]; // revisions currently expanded
}

export interface BoardRow {
  revision: string;
  commitDate: string;
  calculatedOn: string; // newest calculated_on among members
  impactedCount: number; // distinct configuration/test pairs
  stateSummary: Record<string, number>;
  expanded: boolean;
  members: ChangePointPayload[];
}

export interface TriageBoardView {
  rows: BoardRow[];
  error: string | null;
  state: BoardState;
}

export const DEFAULT_BOARD_STATE: BoardState = {
  measurementRegex: "",
  state: "",
  tab: "expanded",
  expanded: [],
};

function tabFilter(tab: BoardTab, cp: ChangePointPayload): boolean {
  if (tab === "legacy") return LEGACY_MEASUREMENTS.includes(cp.key.measurement);
  return true;
}

export function buildTriageBoard(
  payload: GroupsPayload,
  state: BoardState = DEFAULT_BOARD_STATE,
): TriageBoardView {
  const rows: BoardRow[] = [];
  for (const group of payload.groups) {
    const members = group.change_points.filter((cp) => tabFilter(state.tab, cp));
    if (members.length === 0) continue;
    const summary: Record<string, number> = {};
    for (const cp of members) {
      summary[cp.triage_state] = (summary[cp.triage_state] ?? 0) + 1;
    }
    const impacted = new Set(
      members.map((cp) => `${cp.key.configuration}/${cp.key.test}`),
    );
    rows.push({
      revision: group.revision,
      commitDate: group.commit_date,
      calculatedOn: members
        .map((cp) => cp.calculated_on)
        .sort()
        .at(-1)!,
      impactedCount: impacted.size,
      stateSummary: summary,
      expanded: state.expanded.includes(group.revision),
      members,
    });
  }
  return { rows, error: null, state };
}

/** Flip one row's expansion; row order is preserved. */
export function toggleExpand(view: TriageBoardView, revision: string): TriageBoardView {
  const expanded = view.state.expanded.includes(revision)
    ? view.state.expanded.filter((r) => r !== revision)
    : [...view.state.expanded, revision];
  const state = { ...view.state, expanded };
  return {
    ...view,
    state,
    rows: view.rows.map((row) =>
      row.revision === revision ? { ...row, expanded: !row.expanded } : row,
    ),
  };
}

function withMemberStates(
  view: TriageBoardView,
  targets: number[],
  triageState: string,
  ticketId?: string | null,
): TriageBoardView {
  const wanted = new Set(targets);
  return {
    ...view,
    rows: view.rows.map((row) => {
      if (!row.members.some((cp) => wanted.has(cp.id))) return row;
      const members = row.members.map((cp) =>
        wanted.has(cp.id)
          ? {
              ...cp,
              triage_state: triageState,
              ticket_id: ticketId === undefined ? cp.ticket_id : ticketId,
            }
          : cp,
      );
      const summary: Record<string, number> = {};
      for (const cp of members) {
        summary[cp.triage_state] = (summary[cp.triage_state] ?? 0) + 1;
      }
      return { ...row, members, stateSummary: summary };
    }),
  };
}

const ACTION_TARGET_STATE: Record<string, string> = {
  ACKNOWLEDGE: "ACKNOWLEDGED",
  HIDE: "HIDDEN",
  CREATE_TICKET: "TICKETED",
  LINK_TICKET: "TICKETED",
};

/**
 * Refresh the board through the API. On a VALIDATION failure (e.g. a bad
 * regex) the previous rows are retained and the error surfaces inline.
 */
export async function refreshBoard(
  client: ApiClient,
  previous: TriageBoardView,
  state: BoardState,
): Promise<TriageBoardView> {
  try {
    const payload = await client.changePointGroups({
      measurementRegex: state.measurementRegex || undefined,
      state: state.state || undefined,
    });
    return buildTriageBoard(payload, state);
  } catch (err) {
    if (err instanceof ApiError && err.status === 400) {
      return { ...previous, error: err.message };
    }
    throw err;
  }
}

/**
 * Optimistic group action: member badges update immediately and roll back
 * if the API rejects the transition (409 conflict or illegal transition).
 */
export async function applyGroupAction(
  client: ApiClient,
  view: TriageBoardView,
  revision: string,
  action: string,
  actor: string,
  payload: Record<string, unknown> = {},
): Promise<TriageBoardView> {
  const row = view.rows.find((r) => r.revision === revision);
  if (!row) return view;
  const targets = row.members.map((cp) => cp.id);
  const optimistic = withMemberStates(view, targets, ACTION_TARGET_STATE[action]);
  try {
    const result = await client.transition(actor, targets, action, payload);
    let next = optimistic;
    for (const cp of result.change_points) {
      next = withMemberStates(next, [cp.id], cp.triage_state, cp.ticket_id);
    }
    return next;
  } catch (err) {
    if (err instanceof ApiError && (err.status === 409 || err.status === 400)) {
      return { ...view, error: err.message };
    }
    throw err;
  }
}
