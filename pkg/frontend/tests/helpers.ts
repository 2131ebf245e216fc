import type {
  ChangePointPayload,
  ComparePayload,
  CompareRowPayload,
  GroupsPayload,
  KeyPayload,
} from "../src/types.js";

let nextId = 1;

export function key(test: string, measurement: string): KeyPayload {
  return {
    project: "sandbox",
    configuration: "standalone",
    task: "crud",
    test,
    measurement,
    canonical: `sandbox/standalone/crud/${test}/${measurement}`,
  };
}

export function changePoint(
  revision: string,
  test: string,
  measurement: string,
  state = "UNTRIAGED",
): ChangePointPayload {
  return {
    id: nextId++,
    key: key(test, measurement),
    order_index: 20,
    revision,
    commit_date: "2023-04-01T12:00:00+00:00",
    calculated_on: "2023-04-02T03:00:00+00:00",
    qhat: 12.5,
    p_value: 0.004975124378109453,
    before: { start: 0, end: 20, n: 20, mean: 100, variance: 25, min: 90, max: 110 },
    after: { start: 20, end: 40, n: 20, mean: 150, variance: 25, min: 140, max: 160 },
    triage_state: state,
    ticket_id: null,
    version: 1,
    is_canary: false,
  };
}

export function groupsPayload(
  spec: Record<string, [string, string][]>,
): GroupsPayload {
  return {
    groups: Object.entries(spec).map(([revision, members]) => {
      const cps = members.map(([test, m]) => changePoint(revision, test, m));
      const summary: Record<string, number> = {};
      for (const cp of cps) {
        summary[cp.triage_state] = (summary[cp.triage_state] ?? 0) + 1;
      }
      return {
        revision,
        commit_date: "2023-04-01T12:00:00+00:00",
        state_summary: summary,
        change_points: cps,
      };
    }),
  };
}

export function compareRow(
  test: string,
  percentChange: number | null,
  deviation: number | null,
  zeroVariance = false,
): CompareRowPayload {
  return {
    key: key(test, "Throughput"),
    base_mean: 100,
    cand_mean: percentChange === null ? 100 : 100 + percentChange,
    base_n: 20,
    cand_n: 20,
    ratio: percentChange === null ? null : 1 + percentChange / 100,
    percent_change: percentChange,
    deviation,
    zero_variance: zeroVariance,
    zero_mean: percentChange === null,
    welch_p: 0.01,
    mw_p: 0.02,
  };
}

export function comparePayload(rows: CompareRowPayload[]): ComparePayload {
  return {
    base_revision: "rev0010",
    cand_revision: "rev0040",
    min_deviation_filter: 0,
    generated_at: "2023-05-01T00:00:00+00:00",
    rows,
    skipped: [],
  };
}

export function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function bytesResponse(bytes: Uint8Array, status = 200): Response {
  const copy = new Uint8Array(bytes);
  return new Response(copy.buffer as ArrayBuffer, {
    status,
    headers: { "Content-Type": "text/csv" },
  });
}
