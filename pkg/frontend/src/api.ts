// Typed client for the /api/v1 service. All UI mutations and reads go
// through here; CSV downloads are passed through byte-for-byte.

import type {
  ChangePointPayload,
  ComparePayload,
  ErrorPayload,
  GroupsPayload,
  TrendPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public status: number,
    public code: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface BoardQuery {
  measurementRegex?: string;
  state?: string;
  includeCanaries?: boolean;
}

export class ApiClient {
  private fetchFn: FetchLike;

  constructor(
    private baseUrl: string = "",
    private token: string | null = null,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      ...init,
      headers: { ...this.headers(), ...(init?.headers ?? {}) },
    });
    if (!response.ok) {
      let payload: ErrorPayload | null = null;
      try {
        payload = (await response.json()) as ErrorPayload;
      } catch {
        // non-JSON error body
      }
      throw new ApiError(
        payload?.message ?? `HTTP ${response.status}`,
        response.status,
        payload?.code ?? "INTERNAL",
      );
    }
    return (await response.json()) as T;
  }

  async changePointGroups(query: BoardQuery): Promise<GroupsPayload> {
    const params = new URLSearchParams({ group: "revision" });
    if (query.measurementRegex) params.set("measurement_regex", query.measurementRegex);
    if (query.state) params.set("state", query.state);
    if (query.includeCanaries) params.set("include_canaries", "true");
    return this.request<GroupsPayload>(`/api/v1/changepoints?${params}`);
  }

  async transition(
    actor: string,
    targets: number[],
    action: string,
    payload: Record<string, unknown> = {},
  ): Promise<{ change_points: ChangePointPayload[] }> {
    return this.request(`/api/v1/changepoints:transition`, {
      method: "PATCH",
      body: JSON.stringify({ actor, targets, action, payload }),
    });
  }

  async trend(
    project: string,
    configuration: string,
    task: string,
    test: string,
    measurement?: string,
  ): Promise<TrendPayload> {
    const qs = measurement ? `?measurement=${encodeURIComponent(measurement)}` : "";
    const key = [project, configuration, task, test]
      .map(encodeURIComponent)
      .join("/");
    return this.request<TrendPayload>(`/api/v1/trend/${key}${qs}`);
  }

  async compare(
    base: string,
    candidate: string,
    minDeviation: number,
  ): Promise<ComparePayload> {
    const params = new URLSearchParams({
      base,
      candidate,
      min_deviation: String(minDeviation),
    });
    return this.request<ComparePayload>(`/api/v1/compare?${params}`);
  }

  /** Raw CSV bytes, exactly as the API produced them. */
  async compareCsv(
    base: string,
    candidate: string,
    minDeviation: number,
  ): Promise<Uint8Array> {
    const params = new URLSearchParams({
      base,
      candidate,
      min_deviation: String(minDeviation),
      format: "csv",
    });
    const response = await this.fetchFn(
      `${this.baseUrl}/api/v1/compare?${params}`,
      { headers: this.headers() },
    );
    if (!response.ok) {
      throw new ApiError(`HTTP ${response.status}`, response.status, "INTERNAL");
    }
    return new Uint8Array(await response.arrayBuffer());
  }

  async revisions(): Promise<{ revisions: { order: number; revision: string }[] }> {
    return this.request(`/api/v1/revisions`);
  }
}
