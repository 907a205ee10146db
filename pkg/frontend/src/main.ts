/** DOM wiring: hash routing, token handling, the poll loop, and event
 * delegation into the pure state/render layers. */

import { ApiError, HttpPortalApi, PortalApi } from "./api.js";
import { MonitorController } from "./controller.js";
import {
  renderJobsetList,
  renderMonitor,
  renderResources,
  renderResults,
  renderSubmit,
} from "./render.js";
import {
  ResourceFormValues,
  SubmitFormValues,
  specFromForm,
  validateResourceForm,
  validateSubmitForm,
} from "./state.js";
import type { AvailabilityReport, ReplicaEntry } from "./types.js";

const POLL_INTERVAL_MS = 2000;

const app = document.getElementById("app")!;
const tokenInput = document.getElementById("token") as HTMLInputElement;
tokenInput.value = localStorage.getItem("proxy-token") ?? "";
tokenInput.addEventListener("change", () => {
  localStorage.setItem("proxy-token", tokenInput.value.trim());
  route();
});

function api(): PortalApi {
  return new HttpPortalApi("", tokenInput.value.trim());
}

function formValues<T extends Record<string, string>>(form: HTMLFormElement): T {
  const values: Record<string, string> = {};
  for (const element of Array.from(form.elements)) {
    const input = element as HTMLInputElement;
    if (input.name) values[input.name] = input.value;
  }
  return values as T;
}

function message(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  return String(err);
}

let pollTimer: number | undefined;

function stopPolling(): void {
  if (pollTimer !== undefined) {
    clearInterval(pollTimer);
    pollTimer = undefined;
  }
}

// ---------------------------------------------------------------------------
// views

async function showResources(banner: string | null = null,
                              formErrors: Record<string, string> = {}): Promise<void> {
  stopPolling();
  const reports: Record<string, AvailabilityReport> = {};
  try {
    const resources = await api().listResources();
    app.innerHTML = renderResources(resources, reports, formErrors, banner);
  } catch (err) {
    app.innerHTML = renderResources([], reports, formErrors, message(err));
    return;
  }

  app.querySelectorAll("button[data-action=probe]").forEach((button) => {
    button.addEventListener("click", async () => {
      const siteId = (button as HTMLElement).dataset.siteId!;
      try {
        reports[siteId] = await api().probe(siteId);
        const resources = await api().listResources();
        app.innerHTML = renderResources(resources, reports, {}, null);
        wireResourceForms(reports);
      } catch (err) {
        await showResources(message(err));
      }
    });
  });
  wireResourceForms(reports);
}

function wireResourceForms(reports: Record<string, AvailabilityReport>): void {
  const resourceForm = app.querySelector<HTMLFormElement>("#resource-form");
  resourceForm?.addEventListener("submit", async (event) => {
    event.preventDefault();
    const values = formValues<ResourceFormValues>(resourceForm);
    const errors = validateResourceForm(values);
    if (Object.keys(errors).length > 0) {
      await showResources(null, errors); // invalid: no request leaves the page
      return;
    }
    try {
      await api().registerResource({
        site_id: values.site_id.trim(),
        os: values.os.trim(),
        runtime_version: values.runtime_version.trim(),
        cpu_count: Number(values.cpu_count),
        speed_factor: Number(values.speed_factor || "1.0"),
        firewall_ports: null,
        jobmanager_kind: values.jobmanager_kind.toUpperCase(),
        jobmanager_contact: values.jobmanager_contact.trim(),
        fileserver_contact: values.fileserver_contact.trim(),
        app_install_path: values.app_install_path.trim() || null,
      });
      await showResources();
    } catch (err) {
      await showResources(message(err));
    }
  });
  const setForm = app.querySelector<HTMLFormElement>("#active-set-form");
  setForm?.addEventListener("submit", async (event) => {
    event.preventDefault();
    const values = formValues<Record<string, string>>(setForm);
    try {
      await api().defineActiveSet(
        values.name.trim(),
        values.site_ids.split(",").map((s) => s.trim()).filter(Boolean),
      );
      await showResources();
    } catch (err) {
      await showResources(message(err));
    }
  });
}

async function showSubmit(values: Partial<Record<string, string>> = {},
                          errors: Record<string, string> = {},
                          banner: string | null = null): Promise<void> {
  stopPolling();
  let sets;
  try {
    sets = await api().listActiveSets();
  } catch (err) {
    app.innerHTML = renderSubmit([], values, errors, message(err));
    return;
  }
  app.innerHTML = renderSubmit(sets, values, errors, banner);
  const form = app.querySelector<HTMLFormElement>("#submit-form");
  form?.addEventListener("submit", async (event) => {
    event.preventDefault();
    const formData = formValues<SubmitFormValues>(form);
    const fieldErrors = validateSubmitForm(formData);
    if (Object.keys(fieldErrors).length > 0) {
      await showSubmit(formData, fieldErrors); // invalid form: no request
      return;
    }
    try {
      const jobsetId = await api().submitJobset(specFromForm(formData));
      location.hash = `#/monitor/${jobsetId}`;
    } catch (err) {
      await showSubmit(formData, {}, message(err));
    }
  });
}

async function showMonitor(jobsetId: string): Promise<void> {
  stopPolling();
  const controller = new MonitorController(api(), jobsetId);

  const draw = () => {
    app.innerHTML = renderMonitor(controller.state);
    app.querySelectorAll("input[data-action=select]").forEach((box) => {
      box.addEventListener("change", () => {
        controller.toggle((box as HTMLElement).dataset.jobId!);
        draw();
      });
    });
    app.querySelector("button[data-action=cancel-selected]")?.addEventListener("click", async () => {
      await controller.cancelSelected();
      draw();
    });
    app.querySelector("button[data-action=resubmit]")?.addEventListener("click", async () => {
      const newId = await controller.resubmit();
      if (newId) location.hash = `#/monitor/${newId}`;
      else draw();
    });
  };

  await controller.tick();
  draw();
  pollTimer = setInterval(async () => {
    await controller.tick();
    draw();
  }, POLL_INTERVAL_MS) as unknown as number;
}

async function showResults(jobsetId: string,
                           fileView: { uri: string; content: string } | null = null): Promise<void> {
  stopPolling();
  try {
    const records = await api().jobs(jobsetId);
    const replicas: Record<string, ReplicaEntry> = {};
    for (const record of records) {
      if (record.state !== "DONE") continue;
      const index = Number(record.job_id.slice(record.job_id.lastIndexOf(".") + 1));
      for (const uri of record.output_uris) {
        const name = uri.slice(uri.lastIndexOf("/") + 1);
        const logical = `${jobsetId}/${index}/${name}`;
        replicas[logical] = await api().replicas(logical);
      }
    }
    app.innerHTML = renderResults(jobsetId, records, replicas, fileView, null);
    app.querySelectorAll("a[data-action=view-file]").forEach((link) => {
      link.addEventListener("click", async (event) => {
        event.preventDefault();
        const uri = (link as HTMLElement).dataset.uri!;
        try {
          const content = await api().fileContent(uri);
          await showResults(jobsetId, { uri, content });
        } catch (err) {
          app.innerHTML = renderResults(jobsetId, records, replicas, null, message(err));
        }
      });
    });
  } catch (err) {
    app.innerHTML = renderResults(jobsetId, [], {}, null, message(err));
  }
}

async function showJobsets(): Promise<void> {
  stopPolling();
  try {
    app.innerHTML = renderJobsetList(await api().listJobsets(), null);
  } catch (err) {
    app.innerHTML = renderJobsetList([], message(err));
  }
}

// ---------------------------------------------------------------------------
// router

function route(): void {
  const hash = location.hash || "#/jobsets";
  const monitor = /^#\/monitor\/(.+)$/.exec(hash);
  const results = /^#\/results\/(.+)$/.exec(hash);
  if (hash === "#/resources") void showResources();
  else if (hash === "#/submit") void showSubmit();
  else if (monitor) void showMonitor(decodeURIComponent(monitor[1]));
  else if (results) void showResults(decodeURIComponent(results[1]));
  else void showJobsets();
}

window.addEventListener("hashchange", route);
route();
