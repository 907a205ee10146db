"""Append-only submission archive: jobset specs, plans, and job records.

The archive is what makes review, monitoring, and re-submission possible
after the fact: the spec is stored verbatim before any submission starts.
One JSON file holds everything; entry addition and record updates serialize
on the archive lock and are persisted atomically.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass
from datetime import datetime

from .dispatch import SubmissionPlan
from .errors import UnknownJob, UnknownJobset
from .model import JobRecord, JobsetSpec, format_ts, parse_ts, utcnow
from .persist import atomic_write_json, load_json


def new_jobset_id() -> str:
    return f"js-{uuid.uuid4().hex[:12]}"


@dataclass(frozen=True)
class ArchiveEntry:
    jobset_id: str
    spec: JobsetSpec
    plan: SubmissionPlan
    submitted_at: datetime
    job_ids: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "jobset_id": self.jobset_id,
            "spec": self.spec.to_json(),
            "plan": self.plan.to_json(),
            "submitted_at": format_ts(self.submitted_at),
            "job_ids": list(self.job_ids),
        }

    @staticmethod
    def from_json(obj: dict) -> "ArchiveEntry":
        return ArchiveEntry(
            jobset_id=str(obj["jobset_id"]),
            spec=JobsetSpec.from_json(obj["spec"]),
            plan=SubmissionPlan.from_json(obj["plan"]),
            submitted_at=parse_ts(obj["submitted_at"]),
            job_ids=tuple(obj["job_ids"]),
        )


class Archive:
    def __init__(self, path):
        self._path = path
        self.lock = threading.RLock()
        self._dirty = False
        self._entries: dict[str, ArchiveEntry] = {}
        self._order: list[str] = []
        self._jobs: dict[str, JobRecord] = {}
        data = load_json(path)
        if data is not None:
            for obj in data.get("jobsets", []):
                entry = ArchiveEntry.from_json(obj)
                self._entries[entry.jobset_id] = entry
                self._order.append(entry.jobset_id)
            for obj in data.get("jobs", []):
                rec = JobRecord.from_json(obj)
                self._jobs[rec.job_id] = rec

    def add_entry(self, spec: JobsetSpec, plan: SubmissionPlan,
                  records: list[JobRecord], now: datetime | None = None) -> ArchiveEntry:
        entry = ArchiveEntry(
            jobset_id=spec.jobset_id,
            spec=spec,
            plan=plan,
            submitted_at=now or utcnow(),
            job_ids=tuple(r.job_id for r in records),
        )
        with self.lock:
            self._entries[entry.jobset_id] = entry
            self._order.append(entry.jobset_id)
            for rec in records:
                self._jobs[rec.job_id] = rec
            self.save()
        return entry

    def get_entry(self, jobset_id: str) -> ArchiveEntry:
        with self.lock:
            try:
                return self._entries[jobset_id]
            except KeyError:
                raise UnknownJobset(f"no such jobset {jobset_id!r}") from None

    def list_entries(self) -> list[ArchiveEntry]:
        with self.lock:
            return [self._entries[j] for j in self._order]

    def get_job(self, job_id: str) -> JobRecord:
        with self.lock:
            try:
                return self._jobs[job_id]
            except KeyError:
                raise UnknownJob(f"no such job {job_id!r}") from None

    def has_job(self, job_id: str) -> bool:
        with self.lock:
            return job_id in self._jobs

    def jobs_for(self, jobset_id: str) -> list[JobRecord]:
        entry = self.get_entry(jobset_id)
        with self.lock:
            return [self._jobs[j] for j in entry.job_ids]

    def all_jobs(self) -> list[JobRecord]:
        with self.lock:
            return list(self._jobs.values())

    def mark_dirty(self) -> None:
        """Record changed in place; persist on the next save_if_dirty()."""
        with self.lock:
            self._dirty = True

    def save_if_dirty(self) -> None:
        with self.lock:
            if self._dirty:
                self.save()

    def save(self) -> None:
        with self.lock:
            self._dirty = False
            atomic_write_json(
                self._path,
                {
                    "jobsets": [self._entries[j].to_json() for j in self._order],
                    "jobs": [self._jobs[j].to_json() for j in sorted(self._jobs)],
                },
            )
