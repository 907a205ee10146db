import { describe, expect, it } from "vitest";

import { ApiError, HttpPortalApi } from "../src/api.js";

interface Call {
  url: string;
  method: string;
  headers: Record<string, string>;
  body?: string;
}

function mockFetch(status = 200, payload: unknown = {}) {
  const calls: Call[] = [];
  const impl = (async (url: string, init?: RequestInit) => {
    calls.push({
      url: String(url),
      method: init?.method ?? "GET",
      headers: (init?.headers ?? {}) as Record<string, string>,
      body: init?.body as string | undefined,
    });
    return {
      ok: status < 400,
      status,
      text: async () => JSON.stringify(payload),
    } as Response;
  }) as typeof fetch;
  return { impl, calls };
}

// Every route the portal documents; the client must never stray off this list.
const DOCUMENTED = [
  /^\/resources$/,
  /^\/resources\/[^/]+\/probe$/,
  /^\/active-sets$/,
  /^\/jobsets$/,
  /^\/jobsets\/[^/]+$/,
  /^\/jobsets\/[^/]+\/resubmit$/,
  /^\/jobsets\/[^/]+\/summary$/,
  /^\/jobs\?jobset=[^&]+$/,
  /^\/jobs\/poll$/,
  /^\/jobs\/cancel$/,
  /^\/replicas\?name=[^&]+$/,
  /^\/files\?uri=[^&]+$/,
];

describe("portal client", () => {
  it("sends the proxy token on every call", async () => {
    const { impl, calls } = mockFetch(200, []);
    const api = new HttpPortalApi("http://portal", "tok-123", impl);
    await api.listResources();
    await api.poll(["a"]);
    for (const call of calls) {
      expect(call.headers["X-Proxy-Token"]).toBe("tok-123");
    }
  });

  it("issues only documented endpoints", async () => {
    const { impl, calls } = mockFetch(200, { jobset_id: "js-1", site_id: "s" });
    const api = new HttpPortalApi("", "t", impl);
    await api.listResources();
    await api.registerResource({} as never);
    await api.probe("siteA");
    await api.listActiveSets();
    await api.defineActiveSet("x", ["a"]);
    await api.submitJobset({} as never);
    await api.listJobsets().catch(() => undefined);
    await api.getJobset("js-1");
    await api.resubmit("js-1");
    await api.jobs("js-1").catch(() => undefined);
    await api.poll(["j"]).catch(() => undefined);
    await api.cancel(["j"]).catch(() => undefined);
    await api.summary("js-1");
    await api.replicas("js-1/0/ntuple.csv");
    await api.fileContent("file:///x");
    for (const call of calls) {
      expect(
        DOCUMENTED.some((pattern) => pattern.test(call.url)),
        `undocumented call: ${call.url}`,
      ).toBe(true);
    }
  });

  it("posts JSON bodies for submissions and job actions", async () => {
    const { impl, calls } = mockFetch(200, { jobset_id: "js-9" });
    const api = new HttpPortalApi("", "t", impl);
    await api.submitJobset({ job_count: 4 } as never);
    await api.cancel(["js-9.0000", "js-9.0001"]);
    expect(calls[0].method).toBe("POST");
    expect(JSON.parse(calls[0].body!)).toEqual({ job_count: 4 });
    expect(JSON.parse(calls[1].body!)).toEqual({ job_ids: ["js-9.0000", "js-9.0001"] });
  });

  it("maps error replies to ApiError with code and status", async () => {
    const { impl } = mockFetch(422, { error: "ValidationError", message: "job_count must be >= 1" });
    const api = new HttpPortalApi("", "t", impl);
    const failure = await api.submitJobset({} as never).catch((e) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect(failure.status).toBe(422);
    expect(failure.code).toBe("ValidationError");
    expect(failure.message).toMatch(/job_count/);
  });
});
