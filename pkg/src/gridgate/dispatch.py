"""Proportional job allocation and asynchronous per-site submission.

Allocation uses largest-remainder apportionment over per-site computing
power (cpu_count x speed_factor): every site gets floor(n * p_i / sum(p))
jobs, and the leftover goes one each to the largest fractional remainders,
ties broken by larger power, then by lower position in the active set. That
keeps every count within one job of its exact quota.

Submission is asynchronous: one worker per site deploys the tool cache once
(skipped for broker sites, whose hand-off is a self-contained job
description), then submits its jobs sequentially, each with a one-level
delegated credential. A failed submission marks only its own record.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable, Sequence

from . import wire
from .credentials import ProxyCredential, delegate
from .errors import EmptyPowerList, GridGateError, StaleActiveSet, ValidationError
from .model import (
    JobEvent,
    JobRecord,
    JobmanagerKind,
    JobsetSpec,
    format_ts,
    job_id_for,
    job_index_of,
    parse_ts,
    utcnow,
)
from .registry import ResourceRegistry
from .staging import ToolBundle, ensure_toolcache

DELEGATION_LIFETIME = timedelta(hours=12)
SUBMIT_TIMEOUT = 5.0


@dataclass(frozen=True)
class Allocation:
    site_id: str
    job_indices: tuple[int, ...]

    def to_json(self) -> dict:
        return {"site_id": self.site_id, "job_indices": list(self.job_indices)}

    @staticmethod
    def from_json(obj: dict) -> "Allocation":
        return Allocation(str(obj["site_id"]), tuple(int(i) for i in obj["job_indices"]))


@dataclass(frozen=True)
class SubmissionPlan:
    jobset_id: str
    allocations: tuple[Allocation, ...]
    created_at: datetime

    def counts(self) -> dict[str, int]:
        return {a.site_id: len(a.job_indices) for a in self.allocations}

    def to_json(self) -> dict:
        return {
            "jobset_id": self.jobset_id,
            "allocations": [a.to_json() for a in self.allocations],
            "created_at": format_ts(self.created_at),
        }

    @staticmethod
    def from_json(obj: dict) -> "SubmissionPlan":
        return SubmissionPlan(
            jobset_id=str(obj["jobset_id"]),
            allocations=tuple(Allocation.from_json(a) for a in obj["allocations"]),
            created_at=parse_ts(obj["created_at"]),
        )


def allocate(n_jobs: int, powers: Sequence[float]) -> list[int]:
    """Largest-remainder split of n_jobs proportional to powers."""
    if not powers:
        raise EmptyPowerList("powers must be non-empty")
    if any(p <= 0 for p in powers):
        raise ValidationError("powers must all be > 0")
    if n_jobs < 0:
        raise ValidationError("n_jobs must be >= 0")
    total = sum(powers)
    quotas = [n_jobs * p / total for p in powers]
    counts = [math.floor(q) for q in quotas]
    remainder = n_jobs - sum(counts)
    order = sorted(
        range(len(powers)),
        key=lambda i: (-(quotas[i] - counts[i]), -powers[i], i),
    )
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def plan_submission(spec: JobsetSpec, registry: ResourceRegistry,
                    now: datetime | None = None) -> SubmissionPlan:
    """Partition job indices 0..job_count-1 across the active set, as
    contiguous ranges in set order sized by allocate()."""
    aset = registry.get_active_set(spec.active_set)
    records = []
    for site_id in aset.site_ids:
        if not registry.has_resource(site_id):
            raise StaleActiveSet(
                f"active set {aset.name!r} references removed site {site_id!r}"
            )
        records.append(registry.get_resource(site_id))
    counts = allocate(spec.job_count, [r.power for r in records])
    allocations = []
    cursor = 0
    for record, count in zip(records, counts):
        indices = tuple(range(cursor, cursor + count))
        cursor += count
        allocations.append(Allocation(site_id=record.site_id, job_indices=indices))
    return SubmissionPlan(
        jobset_id=spec.jobset_id,
        allocations=tuple(allocations),
        created_at=now or utcnow(),
    )


def job_results_uri(spec: JobsetSpec, index: int):
    return spec.results_base.join(spec.jobset_id, str(index) + "/")


def job_seed(spec: JobsetSpec, index: int) -> int:
    return spec.rng_seed_base + index


def wrapper_request(spec: JobsetSpec, index: int, cred: ProxyCredential,
                    tool: ToolBundle | None) -> dict:
    req = {
        "jobset_id": spec.jobset_id,
        "job_index": index,
        "app_bundle": str(spec.app_bundle),
        "input_uris": [str(u) for u in spec.input_data],
        "results_uri": str(job_results_uri(spec, index)),
        "events": spec.events_per_job,
        "model": spec.physics_model,
        "seed": job_seed(spec, index),
        "credential": cred.to_json(),
    }
    if tool is not None:
        req["tool"] = {"name": tool.name, "version": tool.version}
    return req


def render_broker_description(spec: JobsetSpec, job_index: int) -> str:
    """Deterministic job description a broker-kind site can re-parse."""
    fields = (
        ("Executable", str(spec.app_bundle)),
        ("Arguments", f"{spec.events_per_job} {spec.physics_model} {job_seed(spec, job_index)}"),
        ("InputSandbox", ",".join(str(u) for u in spec.input_data)),
        ("OutputSandbox", str(job_results_uri(spec, job_index))),
        ("Requirements", f"jobset={spec.jobset_id}"),
    )
    return "".join(f'{key} = "{value}";\n' for key, value in fields)


def submit_plan(
    plan: SubmissionPlan,
    spec: JobsetSpec,
    registry: ResourceRegistry,
    cred: ProxyCredential,
    tool: ToolBundle | None = None,
    records: list[JobRecord] | None = None,
    on_update: Callable[[JobRecord], None] | None = None,
    record_lock: threading.RLock | None = None,
    wait: bool = False,
    timeout: float = SUBMIT_TIMEOUT,
) -> list[JobRecord]:
    """Submit every allocated job; returns the records immediately while
    per-site workers carry out cache deployment and submission."""
    lock = record_lock or threading.RLock()
    by_index: dict[int, JobRecord] = {}
    if records is None:
        records = []
        for alloc in plan.allocations:
            for index in alloc.job_indices:
                records.append(JobRecord.new(job_id_for(spec.jobset_id, index), spec.jobset_id, alloc.site_id))
        records.sort(key=lambda r: r.job_id)
    for rec in records:
        by_index[job_index_of(rec.job_id)] = rec

    def notify(rec: JobRecord) -> None:
        if on_update is not None:
            on_update(rec)

    def fail_record(rec: JobRecord, message: str) -> None:
        with lock:
            rec.submit_error = message
        notify(rec)

    def site_worker(alloc: Allocation) -> None:
        try:
            site = registry.get_resource(alloc.site_id)
        except GridGateError as exc:
            for index in alloc.job_indices:
                fail_record(by_index[index], str(exc))
            return
        if site.jobmanager_kind is not JobmanagerKind.BROKER and tool is not None:
            try:
                ensure_toolcache(registry, alloc.site_id, tool, cred, timeout=timeout)
            except GridGateError as exc:
                for index in alloc.job_indices:
                    fail_record(by_index[index], f"toolcache: {exc}")
                return
        for index in alloc.job_indices:
            rec = by_index[index]
            with lock:
                if rec.submit_error:  # canceled (or failed) before submission
                    continue
            try:
                child = delegate(cred, DELEGATION_LIFETIME)
                if site.jobmanager_kind is JobmanagerKind.BROKER:
                    contact = wire.jdl_submit(
                        site.jobmanager_contact,
                        render_broker_description(spec, index),
                        timeout=timeout,
                    )
                else:
                    contact = wire.gram_submit(
                        site.jobmanager_contact,
                        wrapper_request(spec, index, child, tool),
                        timeout=timeout,
                    )
                with lock:
                    rec.contact = contact
                    rec.apply(JobEvent.submit())
            except (GridGateError, OSError) as exc:
                with lock:
                    rec.submit_error = str(exc)
            notify(rec)

    threads = [
        threading.Thread(target=site_worker, args=(alloc,), name=f"submit-{alloc.site_id}", daemon=True)
        for alloc in plan.allocations
    ]
    for t in threads:
        t.start()
    if wait:
        for t in threads:
            t.join()
    return records
