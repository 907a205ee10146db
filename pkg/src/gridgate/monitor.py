"""Poll GRAM reporters, keep job records authoritative, serve cancellation,
and maintain the live per-jobset dataset summary.

Polling never touches jobs that are already terminal, and an unreachable
site leaves the last known state in place with the record flagged stale.
The dataset summary merges the per-job summary files of DONE jobs by
per-bin addition; merged jobs are cached, so each job's results are fetched
(and its replicas registered) exactly once.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from datetime import datetime

from . import staging, wire
from .archive import Archive
from .credentials import ProxyCredential, Validity, validate
from .dispatch import job_results_uri
from .errors import AuthError, GridGateError, SourceMissing
from .fabric.site import MANIFEST_FILE, NTUPLE_FILE, SUMMARY_FILE
from .model import JobRecord, JobState, format_ts, job_index_of, parse_grid_uri, utcnow
from .registry import ResourceRegistry

log = logging.getLogger(__name__)

DEFAULT_POLL_INTERVAL = 2.0


def merge_histograms(histograms: list[dict[str, int]]) -> dict[str, int]:
    """Per-bin addition; commutative and associative by construction."""
    merged: dict[str, int] = {}
    for hist in histograms:
        for bin_label, count in hist.items():
            merged[bin_label] = merged.get(bin_label, 0) + int(count)
    return merged


@dataclass(frozen=True)
class DatasetSummary:
    jobset_id: str
    histogram: dict[str, int]
    jobs_done: int
    jobs_total: int
    last_updated: datetime

    def to_json(self) -> dict:
        return {
            "jobset_id": self.jobset_id,
            "histogram": dict(self.histogram),
            "jobs_done": self.jobs_done,
            "jobs_total": self.jobs_total,
            "last_updated": format_ts(self.last_updated),
        }


class JobMonitor:
    def __init__(
        self,
        registry: ResourceRegistry,
        archive: Archive,
        catalog: staging.ReplicaCatalog,
        poll_interval: float = DEFAULT_POLL_INTERVAL,
        rpc_timeout: float = 5.0,
    ):
        self.registry = registry
        self.archive = archive
        self.catalog = catalog
        self.poll_interval = poll_interval
        self.rpc_timeout = rpc_timeout
        # One mutex serializes the background poller and user-triggered polls.
        self._poll_mutex = threading.Lock()
        self._merge_lock = threading.RLock()
        self._per_job_hist: dict[str, dict[str, int]] = {}
        self._merged: dict[str, set[str]] = {}
        self._missing: dict[str, set[str]] = {}
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    # -- polling -------------------------------------------------------------

    def poll_jobs(self, job_ids: list[str]) -> list[tuple[str, JobState | None]]:
        """Freshest state per job; None marks an unknown job id. Terminal jobs
        and jobs that never got a contact cost no RPC."""
        with self._poll_mutex:
            results: list[tuple[str, JobState | None]] = []
            touched = False
            for job_id in job_ids:
                if not self.archive.has_job(job_id):
                    results.append((job_id, None))
                    continue
                rec = self.archive.get_job(job_id)
                if not rec.state.terminal and rec.contact:
                    touched |= self._poll_one(rec)
                results.append((job_id, rec.state))
            if touched:
                self.archive.save()
            return results

    def _poll_one(self, rec: JobRecord) -> bool:
        now = utcnow()
        try:
            site = self.registry.get_resource(rec.site_id)
            state, exit_code = wire.gram_status(site.jobmanager_contact, rec.contact,
                                                timeout=self.rpc_timeout)
        except (GridGateError, OSError) as exc:
            log.debug("poll of %s failed: %s", rec.job_id, exc)
            with self.archive.lock:
                rec.stale = True
                rec.polled_at = now
            return True
        with self.archive.lock:
            rec.observe(state, now, exit_code)
            if state is JobState.DONE and not rec.output_uris:
                spec = self.archive.get_entry(rec.jobset_id).spec
                base = job_results_uri(spec, job_index_of(rec.job_id))
                rec.output_uris = [base.join(NTUPLE_FILE), base.join(SUMMARY_FILE)]
        return True

    def poll_all_active(self) -> int:
        """One background-poller sweep; returns how many records it touched."""
        targets = [
            rec.job_id
            for rec in self.archive.all_jobs()
            if not rec.state.terminal and rec.contact
        ]
        if targets:
            self.poll_jobs(targets)
        return len(targets)

    # -- cancellation ----------------------------------------------------------

    def cancel_jobs(self, job_ids: list[str],
                    cred: ProxyCredential) -> list[tuple[str, JobState | None]]:
        """Forward cancel for every non-terminal job; idempotent."""
        validity = validate(cred)
        if validity is not Validity.VALID:
            raise AuthError(f"credential is {validity.value}")
        results: list[tuple[str, JobState | None]] = []
        touched = False
        for job_id in job_ids:
            if not self.archive.has_job(job_id):
                results.append((job_id, None))
                continue
            rec = self.archive.get_job(job_id)
            if not rec.state.terminal and not rec.contact:
                # not yet handed to a site: flag it so the submit worker skips it
                with self.archive.lock:
                    if not rec.contact and not rec.submit_error:
                        rec.submit_error = "canceled before submission"
                        touched = True
            elif not rec.state.terminal and rec.contact:
                try:
                    site = self.registry.get_resource(rec.site_id)
                    state, exit_code = wire.gram_cancel(site.jobmanager_contact, rec.contact,
                                                        timeout=self.rpc_timeout)
                    with self.archive.lock:
                        rec.observe(state, utcnow(), exit_code)
                    touched = True
                except (GridGateError, OSError) as exc:
                    log.debug("cancel of %s failed: %s", job_id, exc)
                    with self.archive.lock:
                        rec.stale = True
                        rec.polled_at = utcnow()
                    touched = True
            results.append((job_id, rec.state))
        if touched:
            self.archive.save()
        return results

    # -- dataset summary -------------------------------------------------------

    def update_summary(self, jobset_id: str) -> DatasetSummary:
        """Fetch results of newly DONE jobs, register their replicas, and
        return the merged histogram. Merge order never matters; a DONE job
        with a missing summary is recorded and excluded until it appears."""
        entry = self.archive.get_entry(jobset_id)
        with self._merge_lock:
            merged_ids = self._merged.setdefault(jobset_id, set())
            missing_ids = self._missing.setdefault(jobset_id, set())
            for rec in self.archive.jobs_for(jobset_id):
                if rec.state is not JobState.DONE or rec.job_id in merged_ids:
                    continue
                try:
                    self._ingest_job(entry.spec, rec)
                    merged_ids.add(rec.job_id)
                    missing_ids.discard(rec.job_id)
                except SourceMissing as exc:
                    log.warning("results missing for DONE job %s: %s", rec.job_id, exc)
                    missing_ids.add(rec.job_id)
            histogram = merge_histograms(
                [self._per_job_hist[j] for j in sorted(merged_ids)]
            )
            return DatasetSummary(
                jobset_id=jobset_id,
                histogram=histogram,
                jobs_done=len(merged_ids),
                jobs_total=entry.spec.job_count,
                last_updated=utcnow(),
            )

    def missing_results(self, jobset_id: str) -> set[str]:
        with self._merge_lock:
            return set(self._missing.get(jobset_id, set()))

    def _ingest_job(self, spec, rec: JobRecord) -> None:
        base = job_results_uri(spec, job_index_of(rec.job_id))
        manifest_raw = staging.read_uri(base.join(MANIFEST_FILE), timeout=self.rpc_timeout)
        summary_raw = staging.read_uri(base.join(SUMMARY_FILE), timeout=self.rpc_timeout)
        try:
            manifest = json.loads(manifest_raw)
            summary = json.loads(summary_raw)
            histogram = {str(k): int(v) for k, v in summary["histogram"].items()}
        except (ValueError, KeyError, TypeError) as exc:
            raise SourceMissing(f"unreadable results for {rec.job_id}: {exc}") from None
        for logical, uri_text in sorted(manifest.items()):
            self.catalog.register_replica(logical, parse_grid_uri(str(uri_text)))
        self._per_job_hist[rec.job_id] = histogram

    # -- background poller -------------------------------------------------------

    def start(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._loop, name="poller", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def _loop(self) -> None:
        while not self._stop.wait(self.poll_interval):
            try:
                self.poll_all_active()
                self.archive.save_if_dirty()
                for entry in self.archive.list_entries():
                    jobs = self.archive.jobs_for(entry.jobset_id)
                    done = {r.job_id for r in jobs if r.state is JobState.DONE}
                    if done - self._merged.get(entry.jobset_id, set()):
                        self.update_summary(entry.jobset_id)
            except Exception:
                log.exception("background poll sweep failed")
