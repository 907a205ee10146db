/** Pure view-model logic: form validation, row building, selection, and
 * summary shaping. No DOM, no fetch; main.ts and the tests drive it. */

import { checkGridUri } from "./griduri.js";
import type { DatasetSummary, JobRecord, JobState } from "./types.js";

export function jobIndexOf(jobId: string): number {
  const dot = jobId.lastIndexOf(".");
  return Number(jobId.slice(dot + 1));
}

export function isTerminal(state: JobState): boolean {
  return state === "DONE" || state === "FAILED" || state === "CANCELED";
}

// ---------------------------------------------------------------------------
// forms

export type ResourceFormValues = {
  site_id: string;
  os: string;
  runtime_version: string;
  cpu_count: string;
  speed_factor: string;
  jobmanager_kind: string;
  jobmanager_contact: string;
  fileserver_contact: string;
  app_install_path: string;
};

export function validateResourceForm(values: ResourceFormValues): Record<string, string> {
  const errors: Record<string, string> = {};
  if (!values.site_id.trim()) errors.site_id = "site id is required";
  const cpus = Number(values.cpu_count);
  if (!Number.isInteger(cpus) || cpus < 1) errors.cpu_count = "cpu count must be an integer >= 1";
  const speed = Number(values.speed_factor || "1.0");
  if (!(speed > 0)) errors.speed_factor = "speed factor must be > 0";
  if (!["FORK", "BATCH", "BROKER"].includes(values.jobmanager_kind.toUpperCase())) {
    errors.jobmanager_kind = "kind must be fork, batch, or broker";
  }
  for (const field of ["jobmanager_contact", "fileserver_contact"] as const) {
    if (!/^[^:\s]+:\d+(\/\S*)?$/.test(values[field].trim())) {
      errors[field] = "expected host:port[/service]";
    }
  }
  return errors;
}

export type SubmitFormValues = {
  app_bundle: string;
  input_data: string; // one URI per line
  results_base: string;
  events_per_job: string;
  physics_model: string;
  job_count: string;
  rng_seed_base: string;
  active_set: string;
};

export function validateSubmitForm(values: SubmitFormValues): Record<string, string> {
  const errors: Record<string, string> = {};
  const bundle = checkGridUri(values.app_bundle);
  if (!bundle.ok) errors.app_bundle = bundle.error!;
  const results = checkGridUri(values.results_base);
  if (!results.ok) {
    errors.results_base = results.error!;
  } else if (!/^(file|gsiftp|gridftp):/i.test(values.results_base.trim())) {
    errors.results_base = "results location must be writable (file or gsiftp)";
  }
  inputUris(values).forEach((uri, i) => {
    const check = checkGridUri(uri);
    if (!check.ok && !errors.input_data) {
      errors.input_data = `input ${i + 1}: ${check.error}`;
    }
  });
  const events = Number(values.events_per_job);
  if (!Number.isInteger(events) || events < 1) errors.events_per_job = "events must be an integer >= 1";
  const jobs = Number(values.job_count);
  if (!Number.isInteger(jobs) || jobs < 1) errors.job_count = "job count must be an integer >= 1";
  if (!Number.isInteger(Number(values.rng_seed_base))) errors.rng_seed_base = "seed base must be an integer";
  if (!values.physics_model.trim()) errors.physics_model = "physics model is required";
  if (!values.active_set.trim()) errors.active_set = "pick an active set";
  return errors;
}

export function inputUris(values: SubmitFormValues): string[] {
  return values.input_data
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
}

export function specFromForm(values: SubmitFormValues) {
  return {
    jobset_id: "assigned-by-portal",
    app_bundle: values.app_bundle.trim(),
    input_data: inputUris(values),
    results_base: values.results_base.trim(),
    events_per_job: Number(values.events_per_job),
    physics_model: values.physics_model.trim(),
    job_count: Number(values.job_count),
    rng_seed_base: Number(values.rng_seed_base),
    active_set: values.active_set.trim(),
  };
}

// ---------------------------------------------------------------------------
// monitor view model

export interface MonitorState {
  jobsetId: string;
  records: JobRecord[];
  selected: Set<string>;
  summary: DatasetSummary | null;
  error: string | null;
}

export function emptyMonitorState(jobsetId: string): MonitorState {
  return { jobsetId, records: [], selected: new Set(), summary: null, error: null };
}

/** Replace records with a fresh GET result; selection keeps only ids that
 * still exist and are still cancelable (no optimistic leftovers). */
export function withRecords(state: MonitorState, records: JobRecord[]): MonitorState {
  const sorted = [...records].sort((a, b) => jobIndexOf(a.job_id) - jobIndexOf(b.job_id));
  const selectable = new Set(
    sorted.filter((r) => !isTerminal(r.state)).map((r) => r.job_id),
  );
  const selected = new Set([...state.selected].filter((id) => selectable.has(id)));
  return { ...state, records: sorted, selected, error: null };
}

export function withSummary(state: MonitorState, summary: DatasetSummary): MonitorState {
  return { ...state, summary };
}

export function withError(state: MonitorState, error: string): MonitorState {
  return { ...state, error };
}

export function toggleSelection(state: MonitorState, jobId: string): MonitorState {
  const record = state.records.find((r) => r.job_id === jobId);
  if (!record || isTerminal(record.state)) return state;
  const selected = new Set(state.selected);
  if (selected.has(jobId)) {
    selected.delete(jobId);
  } else {
    selected.add(jobId);
  }
  return { ...state, selected };
}

export function stateCounts(records: JobRecord[]): Record<string, number> {
  const counts: Record<string, number> = {};
  for (const record of records) {
    counts[record.state] = (counts[record.state] ?? 0) + 1;
  }
  return counts;
}

export function anyStale(records: JobRecord[]): boolean {
  return records.some((r) => r.stale);
}

export interface HistogramBar {
  bin: string;
  count: number;
  fraction: number; // of the tallest bin, for bar widths
}

export function histogramBars(summary: DatasetSummary | null): HistogramBar[] {
  if (!summary) return [];
  const bins = Object.keys(summary.histogram).sort((a, b) => Number(a) - Number(b));
  const max = Math.max(1, ...bins.map((b) => summary.histogram[b]));
  return bins.map((bin) => ({
    bin,
    count: summary.histogram[bin],
    fraction: summary.histogram[bin] / max,
  }));
}
