/** Thin fetch client for the experiment service. */

import type {
  AppConfig,
  SessionInfo,
  Stimulus,
  SubmitPayload,
  SubmitResult,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.base + path, init);
    if (!res.ok) {
      let detail = `HTTP ${res.status}`;
      try {
        const body = (await res.json()) as { detail?: unknown };
        if (body && body.detail !== undefined) {
          detail =
            typeof body.detail === "string"
              ? body.detail
              : JSON.stringify(body.detail);
        }
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  getConfig(): Promise<AppConfig> {
    return this.request<AppConfig>("/config");
  }

  createSession(
    mode: string,
    participantId: string,
    maxItems?: number,
  ): Promise<SessionInfo> {
    const payload: Record<string, unknown> = {
      mode,
      participant_id: participantId,
    };
    if (maxItems !== undefined) payload.max_items = maxItems;
    return this.post<SessionInfo>("/sessions", payload);
  }

  getSession(sessionId: string): Promise<SessionInfo> {
    return this.request<SessionInfo>(`/sessions/${sessionId}`);
  }

  nextStimulus(sessionId: string): Promise<Stimulus> {
    return this.request<Stimulus>(`/sessions/${sessionId}/next`);
  }

  /** Submit a response; one blind retry on network failure.
   *
   * The server deduplicates by (item, selection), so resending the same
   * payload after a dropped connection is safe: either the first attempt
   * never landed, or the retry is acknowledged with replayed=true.
   * Server-side rejections (ApiError) are never retried.
   */
  async submitResponse(
    sessionId: string,
    payload: SubmitPayload,
  ): Promise<SubmitResult> {
    const path = `/sessions/${sessionId}/responses`;
    try {
      return await this.post<SubmitResult>(path, payload);
    } catch (err) {
      if (err instanceof ApiError) throw err;
      return await this.post<SubmitResult>(path, payload);
    }
  }
}
