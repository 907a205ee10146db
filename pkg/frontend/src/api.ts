/** Typed client for the portal HTTP API. Every method maps to exactly one
 * documented endpoint; the UI has no other way to talk to the backend. */

import type {
  ActiveSet,
  ArchiveEntry,
  AvailabilityReport,
  DatasetSummary,
  JobActionResult,
  JobRecord,
  JobsetSpecBody,
  ReplicaEntry,
  ResourceRecord,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export interface PortalApi {
  listResources(): Promise<ResourceRecord[]>;
  registerResource(record: ResourceRecord): Promise<string>;
  probe(siteId: string): Promise<AvailabilityReport>;
  listActiveSets(): Promise<ActiveSet[]>;
  defineActiveSet(name: string, siteIds: string[]): Promise<ActiveSet>;
  submitJobset(spec: JobsetSpecBody): Promise<string>;
  listJobsets(): Promise<ArchiveEntry[]>;
  getJobset(jobsetId: string): Promise<ArchiveEntry>;
  resubmit(jobsetId: string): Promise<string>;
  jobs(jobsetId: string): Promise<JobRecord[]>;
  poll(jobIds: string[]): Promise<JobActionResult[]>;
  cancel(jobIds: string[]): Promise<JobActionResult[]>;
  summary(jobsetId: string): Promise<DatasetSummary>;
  replicas(name: string): Promise<ReplicaEntry>;
  fileContent(uri: string): Promise<string>;
}

export class HttpPortalApi implements PortalApi {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: {
        "Content-Type": "application/json",
        "X-Proxy-Token": this.token,
      },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    if (!response.ok) {
      let code = "Error";
      let message = text;
      try {
        const parsed = JSON.parse(text);
        code = parsed.error ?? code;
        message = parsed.message ?? message;
      } catch {
        // non-JSON error body; keep the raw text
      }
      throw new ApiError(response.status, code, message);
    }
    return JSON.parse(text) as T;
  }

  listResources(): Promise<ResourceRecord[]> {
    return this.request("GET", "/resources");
  }

  async registerResource(record: ResourceRecord): Promise<string> {
    const result = await this.request<{ site_id: string }>("POST", "/resources", record);
    return result.site_id;
  }

  probe(siteId: string): Promise<AvailabilityReport> {
    return this.request("POST", `/resources/${encodeURIComponent(siteId)}/probe`);
  }

  listActiveSets(): Promise<ActiveSet[]> {
    return this.request("GET", "/active-sets");
  }

  defineActiveSet(name: string, siteIds: string[]): Promise<ActiveSet> {
    return this.request("POST", "/active-sets", { name, site_ids: siteIds });
  }

  async submitJobset(spec: JobsetSpecBody): Promise<string> {
    const result = await this.request<{ jobset_id: string }>("POST", "/jobsets", spec);
    return result.jobset_id;
  }

  listJobsets(): Promise<ArchiveEntry[]> {
    return this.request("GET", "/jobsets");
  }

  getJobset(jobsetId: string): Promise<ArchiveEntry> {
    return this.request("GET", `/jobsets/${encodeURIComponent(jobsetId)}`);
  }

  async resubmit(jobsetId: string): Promise<string> {
    const result = await this.request<{ jobset_id: string }>(
      "POST",
      `/jobsets/${encodeURIComponent(jobsetId)}/resubmit`,
    );
    return result.jobset_id;
  }

  jobs(jobsetId: string): Promise<JobRecord[]> {
    return this.request("GET", `/jobs?jobset=${encodeURIComponent(jobsetId)}`);
  }

  poll(jobIds: string[]): Promise<JobActionResult[]> {
    return this.request("POST", "/jobs/poll", { job_ids: jobIds });
  }

  cancel(jobIds: string[]): Promise<JobActionResult[]> {
    return this.request("POST", "/jobs/cancel", { job_ids: jobIds });
  }

  summary(jobsetId: string): Promise<DatasetSummary> {
    return this.request("GET", `/jobsets/${encodeURIComponent(jobsetId)}/summary`);
  }

  replicas(name: string): Promise<ReplicaEntry> {
    return this.request("GET", `/replicas?name=${encodeURIComponent(name)}`);
  }

  async fileContent(uri: string): Promise<string> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/files?uri=${encodeURIComponent(uri)}`,
      { headers: { "X-Proxy-Token": this.token } },
    );
    const text = await response.text();
    if (!response.ok) {
      throw new ApiError(response.status, "Error", text);
    }
    return text;
  }
}
