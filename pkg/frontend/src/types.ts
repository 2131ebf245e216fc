// Payload shapes of the /api/v1 endpoints. The UI renders these verbatim;
// it never computes statistics of its own.

export interface KeyPayload {
  project: string;
  configuration: string;
  task: string;
  test: string;
  measurement: string;
  canonical: string;
}

export interface RegionPayload {
  start: number;
  end: number;
  n: number;
  mean: number;
  variance: number;
  min: number;
  max: number;
}

export interface ChangePointPayload {
  id: number;
  key: KeyPayload;
  order_index: number;
  revision: string;
  commit_date: string;
  calculated_on: string;
  qhat: number;
  p_value: number;
  before: RegionPayload;
  after: RegionPayload;
  triage_state: string;
  ticket_id: string | null;
  version: number;
  is_canary: boolean;
}

export interface GroupPayload {
  revision: string;
  commit_date: string;
  state_summary: Record<string, number>;
  change_points: ChangePointPayload[];
}

export interface GroupsPayload {
  groups: GroupPayload[];
}

export interface TrendPointPayload {
  order: number;
  revision: string;
  commit_date: string;
  value: number;
}

export interface TrendPayload {
  key: KeyPayload;
  measurement: string;
  available_measurements: string[];
  points: TrendPointPayload[];
  change_points: { order_index: number; revision: string; p_value: number }[];
}

export interface CompareRowPayload {
  key: KeyPayload;
  base_mean: number;
  cand_mean: number;
  base_n: number;
  cand_n: number;
  ratio: number | null;
  percent_change: number | null;
  deviation: number | null;
  zero_variance: boolean;
  zero_mean: boolean;
  welch_p: number | null;
  mw_p: number | null;
}

export interface ComparePayload {
  base_revision: string;
  cand_revision: string;
  min_deviation_filter: number;
  generated_at: string;
  rows: CompareRowPayload[];
  skipped: KeyPayload[];
}

export interface ErrorPayload {
  code: string;
  message: string;
  detail: string;
}
