import { describe, expect, it } from "vitest";

import {
  ApiClient,
  ApiError,
  ConflictError,
  ServiceUnreachableError,
  type FetchLike,
} from "../src/api.js";
import type { QueuePage } from "../src/types.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function recordingFetch(
  responder: (url: string, init?: RequestInit) => Response,
): { fetchFn: FetchLike; calls: { url: string; init?: RequestInit }[] } {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchFn: FetchLike = async (url, init) => {
    calls.push({ url, init });
    return responder(url, init);
  };
  return { fetchFn, calls };
}

const QUEUE_PAGE: QueuePage = {
  items: [
    {
      item_id: "S1::Y1",
      stake_id: "S1",
      sys_id: "Y1",
      stakeholder_text: "stake",
      system_condition_text: "sys",
      condition_side: "Mature",
      shared_message_tokens: ["MESSAGE_1"],
      vote_share: 1.0,
      explanation: null,
      status: "Pending",
      decided_by: null,
      decided_at: null,
    },
  ],
  page: 1,
  page_size: 50,
  total: 1,
  store_version: 3,
};

describe("ApiClient", () => {
  it("renders the queue response verbatim", async () => {
    const { fetchFn } = recordingFetch(() => jsonResponse(QUEUE_PAGE));
    const client = new ApiClient("http://svc", null, fetchFn);
    const page = await client.fetchQueue();
    expect(page).toEqual(QUEUE_PAGE);
  });

  it("encodes filters as query parameters", async () => {
    const { fetchFn, calls } = recordingFetch(() => jsonResponse(QUEUE_PAGE));
    const client = new ApiClient("http://svc", null, fetchFn);
    await client.fetchQueue({ status: "Pending", variation: "V1", min_vote_share: 0.8 }, 2, 10);
    const url = new URL(calls[0]!.url);
    expect(url.pathname).toBe("/review/queue");
    expect(url.searchParams.get("status")).toBe("Pending");
    expect(url.searchParams.get("variation")).toBe("V1");
    expect(url.searchParams.get("min_vote_share")).toBe("0.8");
    expect(url.searchParams.get("page")).toBe("2");
    expect(url.searchParams.get("page_size")).toBe("10");
  });

  it("sends the bearer token on every request", async () => {
    const { fetchFn, calls } = recordingFetch(() =>
      jsonResponse({ status: "ok", store_version: 0, provider_id: "mock" }),
    );
    const client = new ApiClient("http://svc", "sekrit", fetchFn);
    await client.health();
    const headers = calls[0]!.init?.headers as Record<string, string>;
    expect(headers["Authorization"]).toBe("Bearer sekrit");
  });

  it("posts decisions with reviewer attribution", async () => {
    const { fetchFn, calls } = recordingFetch(() =>
      jsonResponse({ item_id: "S1::Y1", status: "Accepted", store_version: 4 }),
    );
    const client = new ApiClient("http://svc", null, fetchFn);
    const result = await client.submitDecision("S1::Y1", "accept", "alice");
    expect(result.store_version).toBe(4);
    expect(calls[0]!.url).toBe("http://svc/review/S1%3A%3AY1/decision");
    expect(JSON.parse(String(calls[0]!.init?.body))).toEqual({
      decision: "accept",
      reviewer: "alice",
    });
  });

  it("maps 409 to ConflictError with the service detail", async () => {
    const { fetchFn } = recordingFetch(() =>
      jsonResponse({ detail: "item already Accepted by alice" }, 409),
    );
    const client = new ApiClient("http://svc", null, fetchFn);
    await expect(client.submitDecision("S1::Y1", "reject", "bob")).rejects.toThrowError(
      ConflictError,
    );
  });

  it("maps other failures to ApiError carrying the status", async () => {
    const { fetchFn } = recordingFetch(() => jsonResponse({ detail: "no review item" }, 404));
    const client = new ApiClient("http://svc", null, fetchFn);
    const error = await client.submitDecision("ghost", "accept", "a").catch((e) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect((error as ApiError).status).toBe(404);
    expect(String(error)).toContain("no review item");
  });

  it("wraps network failures as ServiceUnreachableError", async () => {
    const fetchFn: FetchLike = async () => {
      throw new TypeError("fetch failed");
    };
    const client = new ApiClient("http://svc", null, fetchFn);
    await expect(client.health()).rejects.toThrowError(ServiceUnreachableError);
  });

  it("polls recovery status until done", async () => {
    let polls = 0;
    const { fetchFn } = recordingFetch((url) => {
      if (url.endsWith("/recover")) return jsonResponse({ job_id: "j1" });
      polls += 1;
      return jsonResponse({
        job_id: "j1",
        state: polls < 3 ? "running" : "done",
        done: polls,
        total: 3,
        funnel: null,
        recovered: 2,
        queued_items: 2,
        error: null,
      });
    });
    const client = new ApiClient("http://svc", null, fetchFn);
    const { job_id } = await client.startRecovery();
    const status = await client.waitForRecovery(job_id, 1);
    expect(status.state).toBe("done");
    expect(polls).toBe(3);
  });
});
