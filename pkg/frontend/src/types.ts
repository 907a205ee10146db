/** Mirrors of the portal's wire JSON. The UI renders only what the API
 * returns; nothing here is client-invented state. */

export type JobState =
  | "UNSUBMITTED"
  | "PENDING"
  | "ACTIVE"
  | "DONE"
  | "FAILED"
  | "CANCELED";

export const TERMINAL_STATES: ReadonlySet<JobState> = new Set([
  "DONE",
  "FAILED",
  "CANCELED",
]);

export interface ResourceRecord {
  site_id: string;
  os: string;
  runtime_version: string;
  cpu_count: number;
  speed_factor: number;
  firewall_ports: [number, number] | null;
  jobmanager_kind: string;
  jobmanager_contact: string;
  fileserver_contact: string;
  app_install_path: string | null;
}

export interface ActiveSet {
  name: string;
  site_ids: string[];
}

export interface AvailabilityReport {
  site_id: string;
  auth_ok: boolean;
  jobmanager_ok: boolean;
  fileserver_ok: boolean;
  probed_at: string;
}

export interface JobsetSpecBody {
  jobset_id: string;
  app_bundle: string;
  input_data: string[];
  results_base: string;
  events_per_job: number;
  physics_model: string;
  job_count: number;
  rng_seed_base: number;
  active_set: string;
}

export interface PlanAllocation {
  site_id: string;
  job_indices: number[];
}

export interface ArchiveEntry {
  jobset_id: string;
  spec: JobsetSpecBody;
  plan: {
    jobset_id: string;
    allocations: PlanAllocation[];
    created_at: string;
  };
  submitted_at: string;
  job_ids: string[];
}

export interface JobRecord {
  job_id: string;
  jobset_id: string;
  site_id: string;
  contact: string | null;
  state: JobState;
  state_history: [string, JobState][];
  exit_code: number | null;
  output_uris: string[];
  stale: boolean;
  polled_at: string | null;
  submit_error: string | null;
}

export interface DatasetSummary {
  jobset_id: string;
  histogram: Record<string, number>;
  jobs_done: number;
  jobs_total: number;
  last_updated: string;
}

export interface ReplicaEntry {
  logical_name: string;
  physical: string[];
  registered_at: string[];
}

export interface JobActionResult {
  job_id: string;
  state?: JobState;
  error?: string;
}
