import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import {
  DEFAULT_BOARD_STATE,
  applyGroupAction,
  buildTriageBoard,
  refreshBoard,
  toggleExpand,
} from "../src/board.js";
import { encodeBoardState, parseBoardState } from "../src/urlState.js";
import { groupsPayload, jsonResponse } from "./helpers.js";

const TWO_GROUPS = groupsPayload({
  rev0040: [
    ["insert_one", "Latency50thPercentile"],
    ["insert_one", "Latency95thPercentile"],
    ["update_one", "Throughput"],
  ],
  rev0020: [["delete_one", "Throughput"]],
});

describe("triage board", () => {
  it("renders one collapsed row per revision group", () => {
    const view = buildTriageBoard(TWO_GROUPS);
    expect(view.rows).toHaveLength(2);
    expect(view.rows.map((r) => r.revision)).toEqual(["rev0040", "rev0020"]);
    expect(view.rows.every((r) => !r.expanded)).toBe(true);
    expect(view.rows[0].members).toHaveLength(3);
    expect(view.rows[0].impactedCount).toBe(2); // two distinct tests
    expect(view.rows[0].stateSummary).toEqual({ UNTRIAGED: 3 });
  });

  it("expansion reveals members without re-ordering rows", () => {
    const view = buildTriageBoard(TWO_GROUPS);
    const expanded = toggleExpand(view, "rev0040");
    expect(expanded.rows.map((r) => r.revision)).toEqual(["rev0040", "rev0020"]);
    expect(expanded.rows[0].expanded).toBe(true);
    expect(expanded.rows[0].members).toHaveLength(3);
    expect(expanded.rows[1].expanded).toBe(false);
    const collapsed = toggleExpand(expanded, "rev0040");
    expect(collapsed.rows[0].expanded).toBe(false);
  });

  it("shows both commit date and calculated-on per row", () => {
    const view = buildTriageBoard(TWO_GROUPS);
    expect(view.rows[0].commitDate).toBe("2023-04-01T12:00:00+00:00");
    expect(view.rows[0].calculatedOn).toBe("2023-04-02T03:00:00+00:00");
    expect(view.rows[0].commitDate).not.toBe(view.rows[0].calculatedOn);
  });

  it("legacy tab restricts members to the legacy measurement set", () => {
    const view = buildTriageBoard(TWO_GROUPS, {
      ...DEFAULT_BOARD_STATE,
      tab: "legacy",
    });
    expect(view.rows).toHaveLength(2);
    expect(view.rows[0].members.map((cp) => cp.key.measurement)).toEqual([
      "Throughput",
    ]);
  });

  it("invalid regex keeps previous rows and surfaces an inline error", async () => {
    const previous = buildTriageBoard(TWO_GROUPS);
    const client = new ApiClient("", null, async () =>
      jsonResponse(
        {
          code: "VALIDATION",
          message: "invalid measurement regex at position 8: missing ), unterminated subpattern",
          detail: "ValidationError",
        },
        400,
      ),
    );
    const next = await refreshBoard(client, previous, {
      ...DEFAULT_BOARD_STATE,
      measurementRegex: "Latency(",
    });
    expect(next.error).toContain("position 8");
    expect(next.rows).toEqual(previous.rows); // board unchanged
  });

  it("valid regex refresh swaps rows and clears the error", async () => {
    const previous = {
      ...buildTriageBoard(TWO_GROUPS),
      error: "stale error",
    };
    const filtered = groupsPayload({
      rev0040: [["insert_one", "Latency50thPercentile"]],
    });
    const requested: string[] = [];
    const client = new ApiClient("", null, async (input) => {
      requested.push(String(input));
      return jsonResponse(filtered);
    });
    const next = await refreshBoard(client, previous, {
      ...DEFAULT_BOARD_STATE,
      measurementRegex: "Latency50thPercentile",
    });
    expect(next.error).toBeNull();
    expect(next.rows).toHaveLength(1);
    // the regex round-trips to the API parameter
    expect(requested[0]).toContain(
      `measurement_regex=Latency50thPercentile`,
    );
  });

  it("group acknowledge updates member badges without a reload", async () => {
    const view = buildTriageBoard(TWO_GROUPS);
    const targets = view.rows[0].members.map((cp) => cp.id);
    const client = new ApiClient("", null, async (_input, init) => {
      const body = JSON.parse(String(init?.body));
      expect(body.action).toBe("ACKNOWLEDGE");
      expect(body.targets).toEqual(targets);
      return jsonResponse({
        change_points: view.rows[0].members.map((cp) => ({
          ...cp,
          triage_state: "ACKNOWLEDGED",
          version: cp.version + 1,
        })),
      });
    });
    const next = await applyGroupAction(client, view, "rev0040", "ACKNOWLEDGE", "baron");
    expect(
      next.rows[0].members.every((cp) => cp.triage_state === "ACKNOWLEDGED"),
    ).toBe(true);
    expect(next.rows[0].stateSummary).toEqual({ ACKNOWLEDGED: 3 });
    expect(next.rows[1].members[0].triage_state).toBe("UNTRIAGED");
  });

  it("rolls back the optimistic update on a 409 conflict", async () => {
    const view = buildTriageBoard(TWO_GROUPS);
    const client = new ApiClient("", null, async () =>
      jsonResponse(
        {
          code: "ILLEGAL_TRANSITION",
          message: "change point 1 is HIDDEN; cannot move to ACKNOWLEDGED",
          detail: "IllegalTransitionError",
        },
        409,
      ),
    );
    const next = await applyGroupAction(client, view, "rev0040", "ACKNOWLEDGE", "baron");
    expect(
      next.rows[0].members.every((cp) => cp.triage_state === "UNTRIAGED"),
    ).toBe(true);
    expect(next.error).toContain("HIDDEN");
  });
});

describe("board URL state", () => {
  it("round-trips filters, tab and expansion through the URL", () => {
    const state = {
      measurementRegex: "Latency(50|95)thPercentile",
      state: "UNTRIAGED",
      tab: "legacy" as const,
      expanded: ["rev0040", "rev0020"],
    };
    expect(parseBoardState(encodeBoardState(state))).toEqual(state);
  });

  it("defaults apply for an empty query", () => {
    expect(parseBoardState("")).toEqual({
      measurementRegex: "",
      state: "",
      tab: "expanded",
      expanded: [],
    });
  });
});
