/** HTML string builders. Pure data-in / markup-out so tests can assert on
 * rendered views without a DOM. Event hooks are data-action attributes
 * that main.ts wires up after injection. */

import type {
  ActiveSet,
  ArchiveEntry,
  AvailabilityReport,
  JobRecord,
  ReplicaEntry,
  ResourceRecord,
} from "./types.js";
import {
  HistogramBar,
  MonitorState,
  anyStale,
  histogramBars,
  isTerminal,
  stateCounts,
} from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function errorLine(errors: Record<string, string>, field: string): string {
  return errors[field]
    ? `<span class="field-error" data-error-for="${field}">${escapeHtml(errors[field])}</span>`
    : "";
}

export function renderBanner(message: string | null): string {
  return message ? `<div class="banner error">${escapeHtml(message)}</div>` : "";
}

// ---------------------------------------------------------------------------
// resources view

export function renderResources(
  resources: ResourceRecord[],
  reports: Record<string, AvailabilityReport>,
  formErrors: Record<string, string>,
  banner: string | null,
): string {
  const rows = resources
    .map((record) => {
      const report = reports[record.site_id];
      const flags = report
        ? ["auth_ok", "jobmanager_ok", "fileserver_ok"]
            .map((key) => {
              const ok = report[key as keyof AvailabilityReport] as boolean;
              return `<span class="flag ${ok ? "ok" : "bad"}">${key.replace("_ok", "")}</span>`;
            })
            .join(" ")
        : "<em>not probed</em>";
      return `<tr data-site-id="${escapeHtml(record.site_id)}">
        <td>${escapeHtml(record.site_id)}</td>
        <td>${record.cpu_count}</td>
        <td>${record.speed_factor}</td>
        <td>${escapeHtml(record.jobmanager_kind)}</td>
        <td>${escapeHtml(record.jobmanager_contact)}</td>
        <td class="probe-flags">${flags}</td>
        <td><button data-action="probe" data-site-id="${escapeHtml(record.site_id)}">probe</button></td>
      </tr>`;
    })
    .join("");
  return `${renderBanner(banner)}
  <h2>Compute resources</h2>
  <table class="grid" id="resource-table">
    <thead><tr><th>site</th><th>cpus</th><th>speed</th><th>kind</th><th>jobmanager</th><th>availability</th><th></th></tr></thead>
    <tbody>${rows || '<tr><td colspan="7"><em>no resources registered</em></td></tr>'}</tbody>
  </table>
  <h3>Register or update a site</h3>
  <form id="resource-form" data-action="register">
    <label>site id <input name="site_id">${errorLine(formErrors, "site_id")}</label>
    <label>os <input name="os" value="linux"></label>
    <label>runtime <input name="runtime_version" value="1.0"></label>
    <label>cpu count <input name="cpu_count" value="1">${errorLine(formErrors, "cpu_count")}</label>
    <label>speed factor <input name="speed_factor" value="1.0">${errorLine(formErrors, "speed_factor")}</label>
    <label>kind <select name="jobmanager_kind"><option>BATCH</option><option>FORK</option><option>BROKER</option></select>${errorLine(formErrors, "jobmanager_kind")}</label>
    <label>jobmanager contact <input name="jobmanager_contact" placeholder="host:port/service">${errorLine(formErrors, "jobmanager_contact")}</label>
    <label>fileserver contact <input name="fileserver_contact" placeholder="host:port">${errorLine(formErrors, "fileserver_contact")}</label>
    <label>app install path <input name="app_install_path"></label>
    <button type="submit">register</button>
  </form>
  <h3>Define an active set</h3>
  <form id="active-set-form" data-action="define-set">
    <label>name <input name="name"></label>
    <label>members (comma separated) <input name="site_ids"></label>
    <button type="submit">define</button>
  </form>`;
}

// ---------------------------------------------------------------------------
// submit view

export function renderSubmit(
  activeSets: ActiveSet[],
  values: Partial<Record<string, string>>,
  errors: Record<string, string>,
  banner: string | null,
): string {
  const options = activeSets
    .map(
      (set) =>
        `<option value="${escapeHtml(set.name)}"${values.active_set === set.name ? " selected" : ""}>${escapeHtml(set.name)} (${set.site_ids.length} sites)</option>`,
    )
    .join("");
  const value = (field: string, fallback = "") => escapeHtml(values[field] ?? fallback);
  return `${renderBanner(banner)}
  <h2>Submit a jobset</h2>
  ${activeSets.length === 0 ? '<div class="banner warn">define an active set first (resources view)</div>' : ""}
  <form id="submit-form" data-action="submit-jobset">
    <label>application bundle URI <input name="app_bundle" value="${value("app_bundle")}">${errorLine(errors, "app_bundle")}</label>
    <label>input data URIs (one per line) <textarea name="input_data">${value("input_data")}</textarea>${errorLine(errors, "input_data")}</label>
    <label>results base URI <input name="results_base" value="${value("results_base")}">${errorLine(errors, "results_base")}</label>
    <label>events per job <input name="events_per_job" value="${value("events_per_job", "100")}">${errorLine(errors, "events_per_job")}</label>
    <label>physics model <input name="physics_model" value="${value("physics_model", "atlfast")}">${errorLine(errors, "physics_model")}</label>
    <label>job count <input name="job_count" value="${value("job_count", "4")}">${errorLine(errors, "job_count")}</label>
    <label>seed base <input name="rng_seed_base" value="${value("rng_seed_base", "1")}">${errorLine(errors, "rng_seed_base")}</label>
    <label>active set <select name="active_set">${options}</select>${errorLine(errors, "active_set")}</label>
    <button type="submit">submit jobset</button>
  </form>`;
}

// ---------------------------------------------------------------------------
// monitor view

function stateCell(record: JobRecord): string {
  const stale = record.stale ? ' <span class="badge stale">stale</span>' : "";
  const err = record.submit_error
    ? ` <span class="badge error" title="${escapeHtml(record.submit_error)}">submit failed</span>`
    : "";
  return `<span class="state ${record.state.toLowerCase()}">${record.state}</span>${stale}${err}`;
}

export function renderMonitor(state: MonitorState): string {
  const rows = state.records
    .map((record) => {
      const checked = state.selected.has(record.job_id) ? " checked" : "";
      const disabled = isTerminal(record.state) ? " disabled" : "";
      return `<tr data-job-id="${escapeHtml(record.job_id)}">
        <td><input type="checkbox" data-action="select" data-job-id="${escapeHtml(record.job_id)}"${checked}${disabled}></td>
        <td>${escapeHtml(record.job_id)}</td>
        <td>${escapeHtml(record.site_id)}</td>
        <td>${stateCell(record)}</td>
        <td>${record.exit_code ?? ""}</td>
      </tr>`;
    })
    .join("");
  const counts = stateCounts(state.records);
  const countsLine = Object.entries(counts)
    .map(([name, count]) => `${name} ${count}`)
    .join(" / ");
  const bars = histogramBars(state.summary)
    .map(
      (bar: HistogramBar) => `<div class="bar-row" data-bin="${bar.bin}">
        <span class="bin">${bar.bin}</span>
        <span class="bar" style="width:${Math.round(bar.fraction * 100)}%"></span>
        <span class="count">${bar.count}</span>
      </div>`,
    )
    .join("");
  const summaryMeta = state.summary
    ? `<p>${state.summary.jobs_done} of ${state.summary.jobs_total} jobs merged</p>`
    : "<p><em>no summary yet</em></p>";
  return `${renderBanner(state.error)}
  ${anyStale(state.records) ? '<div class="banner warn">some rows are stale (site unreachable)</div>' : ""}
  <h2>Jobset ${escapeHtml(state.jobsetId)}</h2>
  <p id="state-counts">${countsLine || "no jobs"}</p>
  <p>
    <button data-action="cancel-selected"${state.selected.size === 0 ? " disabled" : ""}>cancel selected (${state.selected.size})</button>
    <button data-action="resubmit">re-submit jobset</button>
    <a href="#/results/${escapeHtml(state.jobsetId)}">browse results</a>
  </p>
  <table class="grid" id="job-table">
    <thead><tr><th></th><th>job</th><th>site</th><th>state</th><th>exit</th></tr></thead>
    <tbody>${rows || '<tr><td colspan="5"><em>no jobs yet</em></td></tr>'}</tbody>
  </table>
  <h3>Dataset summary</h3>
  <div id="summary-panel">${summaryMeta}<div class="bars">${bars}</div></div>`;
}

// ---------------------------------------------------------------------------
// results view

export function renderResults(
  jobsetId: string,
  records: JobRecord[],
  replicas: Record<string, ReplicaEntry>,
  fileView: { uri: string; content: string } | null,
  banner: string | null,
): string {
  const sections = records
    .map((record) => {
      if (record.state === "DONE") {
        const files = record.output_uris
          .map((uri) => {
            const name = uri.slice(uri.lastIndexOf("/") + 1);
            const logical = `${record.jobset_id}/${Number(record.job_id.slice(record.job_id.lastIndexOf(".") + 1))}/${name}`;
            const entry = replicas[logical];
            const locations = entry
              ? entry.physical.map((p) => `<li class="replica">${escapeHtml(p)}</li>`).join("")
              : "";
            return `<li>
              <a href="#" data-action="view-file" data-uri="${escapeHtml(uri)}">${escapeHtml(name)}</a>
              <ul class="replicas">${locations}</ul>
            </li>`;
          })
          .join("");
        return `<section class="job-results" data-job-id="${escapeHtml(record.job_id)}">
          <h4>${escapeHtml(record.job_id)} <span class="state done">DONE</span></h4>
          <ul>${files}</ul>
        </section>`;
      }
      return `<section class="job-results" data-job-id="${escapeHtml(record.job_id)}">
        <h4>${escapeHtml(record.job_id)} <span class="badge ${record.state === "FAILED" ? "error" : "warn"}">${record.state}</span></h4>
        <p><em>no outputs</em></p>
      </section>`;
    })
    .join("");
  const viewer = fileView
    ? `<h3>${escapeHtml(fileView.uri)}</h3><pre id="file-content">${escapeHtml(fileView.content)}</pre>`
    : "";
  return `${renderBanner(banner)}
  <h2>Results for ${escapeHtml(jobsetId)}</h2>
  <p><a href="#/monitor/${escapeHtml(jobsetId)}">back to monitor</a></p>
  ${sections || "<p><em>no jobs</em></p>"}
  ${viewer}`;
}

// ---------------------------------------------------------------------------
// jobset list (landing)

export function renderJobsetList(entries: ArchiveEntry[], banner: string | null): string {
  const rows = entries
    .map(
      (entry) => `<tr>
      <td><a href="#/monitor/${escapeHtml(entry.jobset_id)}">${escapeHtml(entry.jobset_id)}</a></td>
      <td>${entry.spec.job_count}</td>
      <td>${escapeHtml(entry.spec.physics_model)}</td>
      <td>${escapeHtml(entry.spec.active_set)}</td>
      <td>${escapeHtml(entry.submitted_at)}</td>
    </tr>`,
    )
    .join("");
  return `${renderBanner(banner)}
  <h2>Archived jobsets</h2>
  <table class="grid">
    <thead><tr><th>jobset</th><th>jobs</th><th>model</th><th>active set</th><th>submitted</th></tr></thead>
    <tbody>${rows || '<tr><td colspan="5"><em>nothing submitted yet</em></td></tr>'}</tbody>
  </table>`;
}
