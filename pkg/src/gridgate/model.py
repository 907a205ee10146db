"""Core domain types: grid URIs, the job lifecycle state machine, jobset
specs, and job records, plus their canonical JSON encodings.

Everything here is an immutable value (JobRecord mutates only through
:meth:`JobRecord.apply` / :meth:`JobRecord.observe`, guarded by whoever owns
the record). The JSON encodings defined here are the wire format used by the
registry, the fabric protocols, and the portal API.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

from .errors import InvalidTransition, MalformedUri, ValidationError

# --------------------------------------------------------------------------
# timestamps

def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def format_ts(ts: datetime) -> str:
    """ISO-8601 with a Z suffix; microseconds kept so round-trips are exact."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def parse_ts(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        return datetime.fromisoformat(text).astimezone(timezone.utc)
    except ValueError as exc:
        raise ValidationError(f"bad timestamp: {text!r}") from exc


# --------------------------------------------------------------------------
# grid URIs

SCHEMES = ("file", "gsiftp", "http")
_SCHEME_ALIASES = {"gridftp": "gsiftp"}
DEFAULT_PORTS = {"gsiftp": 2811, "http": 80}

_URI_RE = re.compile(r"^(?P<scheme>[A-Za-z][A-Za-z0-9+.-]*)://(?P<rest>.*)$")
_HOST_RE = re.compile(r"^[A-Za-z0-9]([A-Za-z0-9.-]*[A-Za-z0-9])?$")


@dataclass(frozen=True)
class GridUri:
    """scheme://host[:port]/path address; host is empty only for file URIs."""

    scheme: str
    host: str = ""
    port: int | None = None
    path: str = "/"

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise MalformedUri(f"unknown scheme {self.scheme!r}")
        if not self.path.startswith("/"):
            raise MalformedUri(f"path must be absolute: {self.path!r}")
        if self.scheme == "file":
            if self.host:
                raise MalformedUri("file URIs take no host")
        elif not self.host:
            raise MalformedUri(f"{self.scheme} URIs need a host")
        if self.port is not None and not 1 <= self.port <= 65535:
            raise MalformedUri(f"port out of range: {self.port}")

    def join(self, *segments: str) -> GridUri:
        """Append path segments (a trailing '/' is preserved on the last one)."""
        path = self.path
        for seg in segments:
            seg = seg.strip("/") if not seg.endswith("/") else seg.lstrip("/")
            path = path.rstrip("/") + "/" + seg
        return GridUri(self.scheme, self.host, self.port, path)

    def __str__(self) -> str:
        return format_grid_uri(self)


def parse_grid_uri(text: str) -> GridUri:
    """Parse scheme://host[:port]/path; "gridftp" is an alias of gsiftp."""
    if not text or not text.strip():
        raise MalformedUri("empty URI")
    m = _URI_RE.match(text.strip())
    if not m:
        raise MalformedUri(f"not a URI: {text!r}")
    scheme = m.group("scheme").lower()
    scheme = _SCHEME_ALIASES.get(scheme, scheme)
    if scheme not in SCHEMES:
        raise MalformedUri(f"unknown scheme {scheme!r} in {text!r}")
    rest = m.group("rest")
    slash = rest.find("/")
    if slash < 0:
        raise MalformedUri(f"missing path in {text!r}")
    authority, path = rest[:slash], rest[slash:]
    if any(c in authority for c in "@?#") or any(c in path for c in "?#@"):
        raise MalformedUri(f"userinfo/query/fragment not supported: {text!r}")
    if any(c.isspace() for c in path):
        raise MalformedUri(f"whitespace in path: {text!r}")
    host, port = authority, None
    if ":" in authority:
        host, _, port_text = authority.partition(":")
        try:
            port = int(port_text)
        except ValueError:
            raise MalformedUri(f"invalid port {port_text!r} in {text!r}") from None
    host = host.lower()
    if host and not _HOST_RE.match(host):
        raise MalformedUri(f"invalid host {host!r} in {text!r}")
    return GridUri(scheme=scheme, host=host, port=port, path=path)


def format_grid_uri(uri: GridUri) -> str:
    authority = uri.host
    if uri.port is not None:
        authority += f":{uri.port}"
    return f"{uri.scheme}://{authority}{uri.path}"


# --------------------------------------------------------------------------
# job lifecycle

class JobState(str, Enum):
    UNSUBMITTED = "UNSUBMITTED"
    PENDING = "PENDING"
    ACTIVE = "ACTIVE"
    DONE = "DONE"
    FAILED = "FAILED"
    CANCELED = "CANCELED"

    @property
    def terminal(self) -> bool:
        return self in TERMINAL_STATES


TERMINAL_STATES = frozenset({JobState.DONE, JobState.FAILED, JobState.CANCELED})


class EventKind(str, Enum):
    SUBMIT = "SUBMIT"
    SCHEDULE = "SCHEDULE"
    COMPLETE = "COMPLETE"
    CANCEL = "CANCEL"


@dataclass(frozen=True)
class JobEvent:
    """Lifecycle event; only COMPLETE carries a payload (the exit code)."""

    kind: EventKind
    exit_code: int | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.kind, EventKind):
            object.__setattr__(self, "kind", EventKind(self.kind))
        if self.kind is EventKind.COMPLETE:
            if self.exit_code is None:
                raise ValidationError("complete event needs an exit code")
        elif self.exit_code is not None:
            raise ValidationError(f"{self.kind.value} event carries no payload")

    @staticmethod
    def submit() -> JobEvent:
        return JobEvent(EventKind.SUBMIT)

    @staticmethod
    def schedule() -> JobEvent:
        return JobEvent(EventKind.SCHEDULE)

    @staticmethod
    def complete(exit_code: int) -> JobEvent:
        return JobEvent(EventKind.COMPLETE, exit_code)

    @staticmethod
    def cancel() -> JobEvent:
        return JobEvent(EventKind.CANCEL)


def transition(state: JobState, event: JobEvent) -> JobState:
    """Successor state of the lifecycle table; terminal states are absorbing."""
    if state is JobState.UNSUBMITTED and event.kind is EventKind.SUBMIT:
        return JobState.PENDING
    if state is JobState.PENDING and event.kind is EventKind.SCHEDULE:
        return JobState.ACTIVE
    if state is JobState.PENDING and event.kind is EventKind.CANCEL:
        return JobState.CANCELED
    if state is JobState.ACTIVE and event.kind is EventKind.COMPLETE:
        return JobState.DONE if event.exit_code == 0 else JobState.FAILED
    if state is JobState.ACTIVE and event.kind is EventKind.CANCEL:
        return JobState.CANCELED
    raise InvalidTransition(f"no transition from {state.value} on {event.kind.value}")


# Edges of the table above, as (from, to) pairs; used to validate recorded
# histories that may have been produced by independent components.
VALID_EDGES = frozenset(
    {
        (JobState.UNSUBMITTED, JobState.PENDING),
        (JobState.PENDING, JobState.ACTIVE),
        (JobState.PENDING, JobState.CANCELED),
        (JobState.ACTIVE, JobState.DONE),
        (JobState.ACTIVE, JobState.FAILED),
        (JobState.ACTIVE, JobState.CANCELED),
    }
)


def is_valid_path(states: list[JobState]) -> bool:
    """True if consecutive states all follow table edges (no repeats)."""
    return all((a, b) in VALID_EDGES for a, b in zip(states, states[1:]))


_REACHABLE: dict[JobState, frozenset[JobState]] = {}


def _reachable_from(state: JobState) -> frozenset[JobState]:
    if state not in _REACHABLE:
        seen = {state}
        frontier = [state]
        while frontier:
            cur = frontier.pop()
            for a, b in VALID_EDGES:
                if a is cur and b not in seen:
                    seen.add(b)
                    frontier.append(b)
        _REACHABLE[state] = frozenset(seen)
    return _REACHABLE[state]


def is_valid_subsequence(states: list[JobState]) -> bool:
    """True if the sequence could have been sampled from a valid path.

    Polling may skip intermediate states, so each next state only has to be
    reachable (in zero or more steps) from the previous one, without repeats.
    """
    for a, b in zip(states, states[1:]):
        if a is b or b not in _reachable_from(a):
            return False
    return True


class JobmanagerKind(str, Enum):
    """How a site runs jobs: single-slot fork, slot-per-CPU batch, or a
    broker that accepts job descriptions and resubmits on its own slots."""

    FORK = "FORK"
    BATCH = "BATCH"
    BROKER = "BROKER"

    @staticmethod
    def parse(text: str) -> "JobmanagerKind":
        try:
            return JobmanagerKind(text.upper())
        except ValueError:
            raise ValidationError(f"unknown jobmanager kind {text!r}") from None


# --------------------------------------------------------------------------
# jobset specs

WRITABLE_SCHEMES = ("gsiftp", "file")


@dataclass(frozen=True)
class JobsetSpec:
    """Archived submission form values for one set of related jobs."""

    jobset_id: str
    app_bundle: GridUri
    input_data: tuple[GridUri, ...]
    results_base: GridUri
    events_per_job: int
    physics_model: str
    job_count: int
    rng_seed_base: int
    active_set: str

    def __post_init__(self) -> None:
        if self.job_count < 1:
            raise ValidationError("job_count must be >= 1")
        if self.events_per_job < 1:
            raise ValidationError("events_per_job must be >= 1")
        if self.results_base.scheme not in WRITABLE_SCHEMES:
            raise ValidationError(
                f"results_base scheme {self.results_base.scheme!r} is not writable"
            )
        if not self.active_set:
            raise ValidationError("active_set name must be non-empty")

    def to_json(self) -> dict:
        return {
            "jobset_id": self.jobset_id,
            "app_bundle": str(self.app_bundle),
            "input_data": [str(u) for u in self.input_data],
            "results_base": str(self.results_base),
            "events_per_job": self.events_per_job,
            "physics_model": self.physics_model,
            "job_count": self.job_count,
            "rng_seed_base": self.rng_seed_base,
            "active_set": self.active_set,
        }

    @staticmethod
    def from_json(obj: dict) -> JobsetSpec:
        try:
            return JobsetSpec(
                jobset_id=str(obj["jobset_id"]),
                app_bundle=parse_grid_uri(obj["app_bundle"]),
                input_data=tuple(parse_grid_uri(u) for u in obj.get("input_data", [])),
                results_base=parse_grid_uri(obj["results_base"]),
                events_per_job=int(obj["events_per_job"]),
                physics_model=str(obj["physics_model"]),
                job_count=int(obj["job_count"]),
                rng_seed_base=int(obj["rng_seed_base"]),
                active_set=str(obj["active_set"]),
            )
        except KeyError as exc:
            raise ValidationError(f"jobset spec missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"bad jobset spec: {exc}") from None


def job_id_for(jobset_id: str, index: int) -> str:
    """Job ids embed the zero-padded index so lexicographic order == index order."""
    return f"{jobset_id}.{index:04d}"


def job_index_of(job_id: str) -> int:
    return int(job_id.rsplit(".", 1)[1])


# --------------------------------------------------------------------------
# job records

@dataclass
class JobRecord:
    """Portal-side view of one job; state always equals the last history entry."""

    job_id: str
    jobset_id: str
    site_id: str
    contact: str | None = None
    state: JobState = JobState.UNSUBMITTED
    state_history: list[tuple[datetime, JobState]] = field(default_factory=list)
    exit_code: int | None = None
    output_uris: list[GridUri] = field(default_factory=list)
    stale: bool = False
    polled_at: datetime | None = None
    submit_error: str | None = None

    @staticmethod
    def new(job_id: str, jobset_id: str, site_id: str, now: datetime | None = None) -> JobRecord:
        now = now or utcnow()
        return JobRecord(
            job_id=job_id,
            jobset_id=jobset_id,
            site_id=site_id,
            state_history=[(now, JobState.UNSUBMITTED)],
        )

    def _clamped(self, now: datetime | None) -> datetime:
        now = now or utcnow()
        if self.state_history and now < self.state_history[-1][0]:
            now = self.state_history[-1][0]
        return now

    def apply(self, event: JobEvent, now: datetime | None = None) -> JobState:
        """Advance through the transition table and append to the history."""
        new_state = transition(self.state, event)
        self.state = new_state
        self.state_history.append((self._clamped(now), new_state))
        if event.kind is EventKind.COMPLETE:
            self.exit_code = event.exit_code
        return new_state

    def observe(self, state: JobState, now: datetime | None = None,
                exit_code: int | None = None) -> None:
        """Record a site-reported state (polling may have skipped steps)."""
        if state is not self.state:
            self.state = state
            self.state_history.append((self._clamped(now), state))
        if state in (JobState.DONE, JobState.FAILED) and exit_code is not None:
            self.exit_code = exit_code
        self.stale = False
        self.polled_at = now or utcnow()

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "jobset_id": self.jobset_id,
            "site_id": self.site_id,
            "contact": self.contact,
            "state": self.state.value,
            "state_history": [[format_ts(t), s.value] for t, s in self.state_history],
            "exit_code": self.exit_code,
            "output_uris": [str(u) for u in self.output_uris],
            "stale": self.stale,
            "polled_at": format_ts(self.polled_at) if self.polled_at else None,
            "submit_error": self.submit_error,
        }

    @staticmethod
    def from_json(obj: dict) -> JobRecord:
        rec = JobRecord(
            job_id=str(obj["job_id"]),
            jobset_id=str(obj["jobset_id"]),
            site_id=str(obj["site_id"]),
            contact=obj.get("contact"),
            state=JobState(obj["state"]),
            state_history=[(parse_ts(t), JobState(s)) for t, s in obj["state_history"]],
            exit_code=obj.get("exit_code"),
            output_uris=[parse_grid_uri(u) for u in obj.get("output_uris", [])],
            stale=bool(obj.get("stale", False)),
            submit_error=obj.get("submit_error"),
        )
        if obj.get("polled_at"):
            rec.polled_at = parse_ts(obj["polled_at"])
        return rec
