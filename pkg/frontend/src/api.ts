// Thin client over the review service. The queue is rendered exactly as the
// service returns it: no client-side re-ranking, no verdict logic.

import type {
  Decision,
  DecisionResult,
  Health,
  JobStatus,
  MetricsSnapshot,
  QueueFilters,
  QueuePage,
  ValidateResult,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

/** Another reviewer already decided the item. */
export class ConflictError extends ApiError {
  constructor(detail: string) {
    super(409, detail);
    this.name = "ConflictError";
  }
}

/** The service could not be reached at all (network down, server gone). */
export class ServiceUnreachableError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${cause instanceof Error ? cause.message : String(cause)}`);
    this.name = "ServiceUnreachableError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private token: string | null = null,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, { ...init, headers });
    } catch (cause) {
      throw new ServiceUnreachableError(cause);
    }
    if (response.status === 409) {
      throw new ConflictError(await extractDetail(response));
    }
    if (!response.ok) {
      throw new ApiError(response.status, await extractDetail(response));
    }
    return (await response.json()) as T;
  }

  health(): Promise<Health> {
    return this.request<Health>("/health");
  }

  fetchQueue(filters: QueueFilters = {}, page = 1, pageSize = 50): Promise<QueuePage> {
    const params = new URLSearchParams({ page: String(page), page_size: String(pageSize) });
    if (filters.status !== undefined) params.set("status", filters.status);
    if (filters.variation !== undefined) params.set("variation", filters.variation);
    if (filters.min_vote_share !== undefined) {
      params.set("min_vote_share", String(filters.min_vote_share));
    }
    return this.request<QueuePage>(`/review/queue?${params.toString()}`);
  }

  submitDecision(itemId: string, decision: Decision, reviewer: string): Promise<DecisionResult> {
    return this.request<DecisionResult>(`/review/${encodeURIComponent(itemId)}/decision`, {
      method: "POST",
      body: JSON.stringify({ decision, reviewer }),
    });
  }

  validate(stakeId: string, sysId: string): Promise<ValidateResult> {
    return this.request<ValidateResult>("/validate", {
      method: "POST",
      body: JSON.stringify({ stake_id: stakeId, sys_id: sysId }),
    });
  }

  startRecovery(): Promise<{ job_id: string }> {
    return this.request<{ job_id: string }>("/recover", { method: "POST", body: "{}" });
  }

  recoveryStatus(jobId: string): Promise<JobStatus> {
    return this.request<JobStatus>(`/recover/${encodeURIComponent(jobId)}`);
  }

  metrics(): Promise<MetricsSnapshot> {
    return this.request<MetricsSnapshot>("/metrics/latest");
  }

  async waitForRecovery(jobId: string, intervalMs = 200, timeoutMs = 60_000): Promise<JobStatus> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.recoveryStatus(jobId);
      if (status.state === "done" || status.state === "failed") {
        return status;
      }
      if (Date.now() > deadline) {
        throw new Error(`recovery job ${jobId} still ${status.state} after ${timeoutMs}ms`);
      }
      await sleep(intervalMs);
    }
  }
}

async function extractDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") {
      return body.detail;
    }
    return JSON.stringify(body.detail ?? body);
  } catch {
    return `${response.status} ${response.statusText}`;
  }
}
