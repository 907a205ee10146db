"""One simulated grid site: a jobmanager with CPU slots and a GRAM-style
reporter, its fileserver, and the wrapper that runs each job.

A site accepts wrapper requests (SUBMIT) or broker documents (JDL), queues
them, and runs each accepted job through the six wrapper phases

    INSTALL_LIBS -> STAGE_IN -> RUN -> STAGE_OUT -> REGISTER -> CLEANUP

in a fresh working directory under base_dir. CLEANUP always runs; on
failure or cancellation it also removes partially staged results. All state
changes go through the core transition table, so observed histories are
valid by construction. fork sites run one job at a time, batch and broker
sites run up to cpu_count.
"""

from __future__ import annotations

import base64
import json
import random
import shutil
import socketserver
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path

from .. import errors, staging, wire
from ..credentials import ProxyCredential, Validity, validate
from ..errors import (
    AuthError,
    BindError,
    CacheMissing,
    MalformedDescription,
    MalformedRequest,
    QueueFull,
    UnknownContact,
)
from ..model import (
    GridUri,
    JobEvent,
    JobState,
    JobmanagerKind,
    parse_grid_uri,
    transition,
    utcnow,
)
from .app import ntuple_csv, run_simulated_app
from .fileserver import FileServer
from .jdl import parse_description

NTUPLE_FILE = "ntuple.csv"
SUMMARY_FILE = "summary.json"
MANIFEST_FILE = "manifest.json"

_CANCEL_POLL = 0.01


class WrapperPhase(Enum):
    INSTALL_LIBS = "INSTALL_LIBS"
    STAGE_IN = "STAGE_IN"
    RUN = "RUN"
    STAGE_OUT = "STAGE_OUT"
    REGISTER = "REGISTER"
    CLEANUP = "CLEANUP"


@dataclass
class SiteConfig:
    site_id: str
    cpu_count: int
    jobmanager_kind: JobmanagerKind
    base_dir: str
    listen: str = "127.0.0.1:0"
    file_listen: str = "127.0.0.1:0"
    failure_rate: float = 0.0
    seconds_per_event: float = 0.01
    app_install_path: str | None = None
    queue_limit: int = 1000

    def __post_init__(self) -> None:
        if self.cpu_count < 1:
            raise errors.ValidationError("cpu_count must be >= 1")
        if not 0.0 <= self.failure_rate <= 1.0:
            raise errors.ValidationError("failure_rate must be in [0, 1]")
        if self.seconds_per_event < 0:
            raise errors.ValidationError("seconds_per_event must be >= 0")

    @staticmethod
    def from_json(obj: dict) -> "SiteConfig":
        return SiteConfig(
            site_id=str(obj["site_id"]),
            cpu_count=int(obj["cpu_count"]),
            jobmanager_kind=JobmanagerKind.parse(str(obj["jobmanager_kind"])),
            base_dir=str(obj["base_dir"]),
            listen=str(obj.get("listen", "127.0.0.1:0")),
            file_listen=str(obj.get("file_listen", "127.0.0.1:0")),
            failure_rate=float(obj.get("failure_rate", 0.0)),
            seconds_per_event=float(obj.get("seconds_per_event", 0.01)),
            app_install_path=obj.get("app_install_path"),
            queue_limit=int(obj.get("queue_limit", 1000)),
        )


@dataclass
class _SiteJob:
    contact: str
    request: dict
    state: JobState = JobState.UNSUBMITTED
    history: list[tuple[datetime, JobState]] = field(default_factory=list)
    exit_code: int | None = None
    cancel_requested: bool = False
    workdir: Path | None = None

    def apply(self, event: JobEvent) -> None:
        self.state = transition(self.state, event)
        self.history.append((utcnow(), self.state))
        if event.exit_code is not None:
            self.exit_code = event.exit_code


class _JobmanagerServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True
    owner: "Site"


class _JobmanagerHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        site: Site = self.server.owner  # type: ignore[attr-defined]
        try:
            line = wire.LineSocket(self.request).read_line()
            reply = site.handle_line(line)
        except errors.GridGateError as exc:
            reply = f"ERR {errors.code_of(exc)} {str(exc).splitlines()[0] if str(exc) else errors.code_of(exc)}"
        except Exception as exc:  # defensive: a handler crash must answer
            reply = f"ERR GridGateError internal failure: {exc}"
        try:
            self.request.sendall(reply.encode("utf-8") + b"\n")
        except OSError:
            pass


class Site:
    """Handle for one running site (jobmanager + fileserver)."""

    def __init__(self, config: SiteConfig):
        self.config = config
        self.base_dir = Path(config.base_dir)
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self.fileserver = FileServer(config.site_id, self.base_dir, config.file_listen)
        host, port = wire.parse_endpoint(config.listen)
        try:
            self._server = _JobmanagerServer((host, port), _JobmanagerHandler)
        except OSError as exc:
            self.fileserver.stop()
            raise BindError(f"cannot bind jobmanager on {config.listen}: {exc}") from None
        self._server.owner = self
        self._lock = threading.RLock()
        self._cond = threading.Condition(self._lock)
        self._jobs: dict[str, _SiteJob] = {}
        self._queue: deque[str] = deque()
        self._serial = 0
        self._active = 0
        self.max_active = 0  # high-water mark of simultaneously ACTIVE jobs
        self._running = False
        self._threads: list[threading.Thread] = []
        self._serve_thread: threading.Thread | None = None

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> "Site":
        self._running = True
        self.fileserver.start()
        self._serve_thread = threading.Thread(
            target=self._server.serve_forever, name=f"jm-{self.site_id}", daemon=True
        )
        self._threads = [
            self._serve_thread,
            threading.Thread(target=self._scheduler, name=f"sched-{self.site_id}", daemon=True),
        ]
        for t in self._threads:
            t.start()
        return self

    def stop(self) -> None:
        with self._cond:
            self._running = False
            self._cond.notify_all()
        # shutdown() blocks forever unless serve_forever is actually running
        if self._serve_thread is not None and self._serve_thread.is_alive():
            self._server.shutdown()
        self._server.server_close()
        self.fileserver.stop()

    @property
    def site_id(self) -> str:
        return self.config.site_id

    @property
    def slots(self) -> int:
        if self.config.jobmanager_kind is JobmanagerKind.FORK:
            return 1
        return self.config.cpu_count

    @property
    def jobmanager_endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"{host}:{port}"

    @property
    def fileserver_endpoint(self) -> str:
        return self.fileserver.endpoint

    def wait_idle(self, timeout: float = 30.0) -> bool:
        """Block until no job is queued or running (test convenience)."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while self._queue or self._active:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cond.wait(remaining)
        return True

    # -- wire dispatch ------------------------------------------------------

    def handle_line(self, line: str) -> str:
        verb, _, rest = line.partition(" ")
        if verb == "PING":
            return f"PONG {self.site_id}"
        if verb == "SUBMIT":
            contact = self.gram_submit(wire.unb64_json(rest.strip()))
            return f"OK {contact}"
        if verb == "STATUS":
            state, exit_code = self.gram_status(rest.strip())
            return self._state_reply(state, exit_code)
        if verb == "CANCEL":
            state, exit_code = self.gram_cancel(rest.strip())
            return self._state_reply(state, exit_code)
        if verb == "JDL":
            try:
                document = base64.b64decode(rest.strip().encode("ascii"), validate=True).decode("utf-8")
            except ValueError as exc:
                raise MalformedDescription(f"bad base64 document: {exc}") from None
            return f"OK {self.broker_accept(document)}"
        raise MalformedRequest(f"unknown verb {verb!r}")

    @staticmethod
    def _state_reply(state: JobState, exit_code: int | None) -> str:
        if state in (JobState.DONE, JobState.FAILED) and exit_code is not None:
            return f"STATE {state.value} {exit_code}"
        return f"STATE {state.value}"

    # -- submission ---------------------------------------------------------

    def gram_submit(self, request: dict, trusted: bool = False) -> str:
        if not trusted:
            self._check_credential(request)
            self._check_toolcache(request)
        self._check_request_shape(request)
        with self._cond:
            if len(self._queue) >= self.config.queue_limit:
                raise QueueFull(f"site {self.site_id} queue is at {self.config.queue_limit}")
            self._serial += 1
            contact = f"{self.site_id}#{self._serial:05d}"
            job = _SiteJob(contact=contact, request=request)
            job.history.append((utcnow(), job.state))
            job.apply(JobEvent.submit())
            self._jobs[contact] = job
            self._queue.append(contact)
            self._cond.notify_all()
        return contact

    def broker_accept(self, document: str) -> str:
        if self.config.jobmanager_kind is not JobmanagerKind.BROKER:
            raise MalformedRequest(f"site {self.site_id} is not a broker")
        fields = parse_description(document)
        args = fields["Arguments"].split()
        if len(args) != 3:
            raise MalformedDescription(f"Arguments must be 'events model seed', got {fields['Arguments']!r}")
        try:
            events, seed = int(args[0]), int(args[2])
        except ValueError:
            raise MalformedDescription(f"non-integer events/seed in {fields['Arguments']!r}") from None
        try:
            results = parse_grid_uri(fields["OutputSandbox"])
            inputs = [u for u in fields["InputSandbox"].split(",") if u]
            for u in inputs:
                parse_grid_uri(u)
            parse_grid_uri(fields["Executable"])
        except errors.MalformedUri as exc:
            raise MalformedDescription(str(exc)) from None
        if events < 1:
            raise MalformedDescription("events must be >= 1")
        request = {
            "app_bundle": fields["Executable"],
            "input_uris": inputs,
            "results_uri": str(results),
            "events": events,
            "model": args[1],
            "seed": seed,
        }
        # The broker resubmits on its own slots; the document carries no
        # credential or cache requirement, the hand-off is trusted.
        return self.gram_submit(request, trusted=True)

    def _check_credential(self, request: dict) -> None:
        obj = request.get("credential")
        if not isinstance(obj, dict):
            raise AuthError("request carries no credential")
        try:
            cred = ProxyCredential.from_json(obj)
        except errors.MalformedCredential as exc:
            raise AuthError(str(exc)) from None
        validity = validate(cred)
        if validity is not Validity.VALID:
            raise AuthError(f"credential is {validity.value}")

    def _check_toolcache(self, request: dict) -> None:
        tool = request.get("tool")
        if not tool:
            return
        marker = (
            self.base_dir
            / staging.TOOLCACHE_DIR
            / str(tool["name"])
            / str(tool["version"])
            / staging.MARKER_NAME
        )
        if not marker.is_file():
            raise CacheMissing(
                f"site {self.site_id} lacks tool cache {tool['name']} {tool['version']}"
            )

    @staticmethod
    def _check_request_shape(request: dict) -> None:
        try:
            events = int(request["events"])
            str(request["model"])
            int(request["seed"])
            parse_grid_uri(str(request["results_uri"]))
            parse_grid_uri(str(request["app_bundle"]))
            for u in request.get("input_uris", []):
                parse_grid_uri(str(u))
        except KeyError as exc:
            raise MalformedRequest(f"wrapper request missing {exc.args[0]!r}") from None
        except (TypeError, ValueError, errors.MalformedUri) as exc:
            raise MalformedRequest(f"bad wrapper request: {exc}") from None
        if events < 1:
            raise MalformedRequest("events must be >= 1")

    # -- status / cancel ----------------------------------------------------

    def _job(self, contact: str) -> _SiteJob:
        job = self._jobs.get(contact)
        if job is None:
            raise UnknownContact(f"no job {contact!r} at {self.site_id}")
        return job

    def gram_status(self, contact: str) -> tuple[JobState, int | None]:
        with self._lock:
            job = self._job(contact)
            return job.state, job.exit_code

    def gram_cancel(self, contact: str) -> tuple[JobState, int | None]:
        with self._cond:
            job = self._job(contact)
            if job.state is JobState.PENDING:
                self._queue.remove(contact)
                job.apply(JobEvent.cancel())
                self._cond.notify_all()
            elif job.state is JobState.ACTIVE:
                job.cancel_requested = True
                job.apply(JobEvent.cancel())
            return job.state, job.exit_code

    def job_history(self, contact: str) -> list[tuple[datetime, JobState]]:
        with self._lock:
            return list(self._job(contact).history)

    def contacts(self) -> list[str]:
        with self._lock:
            return list(self._jobs)

    # -- execution ----------------------------------------------------------

    def _scheduler(self) -> None:
        while True:
            with self._cond:
                while self._running and (not self._queue or self._active >= self.slots):
                    self._cond.wait()
                if not self._running:
                    return
                contact = self._queue.popleft()
                job = self._jobs[contact]
                if job.state is not JobState.PENDING:
                    continue
                job.apply(JobEvent.schedule())
                self._active += 1
                self.max_active = max(self.max_active, self._active)
            worker = threading.Thread(
                target=self._run_job, args=(job,), name=f"job-{contact}", daemon=True
            )
            worker.start()

    def _run_job(self, job: _SiteJob) -> None:
        exit_code = 0
        try:
            self._run_phases(job)
        except Exception:
            exit_code = 1
        self._cleanup(job, failed=exit_code != 0)
        with self._cond:
            if job.state is JobState.ACTIVE:
                job.apply(JobEvent.complete(exit_code))
            self._active -= 1
            self._cond.notify_all()

    def _run_phases(self, job: _SiteJob) -> None:
        req = job.request
        job.workdir = self.base_dir / "jobs" / job.contact.replace("#", "-")
        job.workdir.mkdir(parents=True, exist_ok=True)
        results_uri = parse_grid_uri(str(req["results_uri"]))

        # INSTALL_LIBS
        if self._canceled(job):
            return
        install = self.config.app_install_path
        if not (install and Path(install).exists()):
            data = staging.read_uri(parse_grid_uri(str(req["app_bundle"])))
            (job.workdir / "app.bin").write_bytes(data)

        # STAGE_IN
        if self._canceled(job):
            return
        indir = job.workdir / "in"
        for i, text in enumerate(req.get("input_uris", [])):
            uri = parse_grid_uri(str(text))
            indir.mkdir(parents=True, exist_ok=True)
            name = uri.path.rstrip("/").rsplit("/", 1)[-1] or "input"
            (indir / f"{i:03d}_{name}").write_bytes(staging.read_uri(uri))

        # RUN
        if self._canceled(job):
            return
        events, model, seed = int(req["events"]), str(req["model"]), int(req["seed"])
        self._simulate_work(job, events * self.config.seconds_per_event)
        if self._canceled(job):
            return
        if self.config.failure_rate and random.random() < self.config.failure_rate:
            raise RuntimeError("injected run failure")
        rows, summary = run_simulated_app(events, model, seed)
        (job.workdir / NTUPLE_FILE).write_bytes(ntuple_csv(rows))
        summary_doc = {"histogram": summary, "events": events, "exit_code": 0}
        (job.workdir / SUMMARY_FILE).write_bytes(
            json.dumps(summary_doc, sort_keys=True).encode("utf-8")
        )

        # STAGE_OUT
        if self._canceled(job):
            return
        for name in (NTUPLE_FILE, SUMMARY_FILE):
            staging.write_uri(results_uri.join(name), (job.workdir / name).read_bytes())

        # REGISTER
        if self._canceled(job):
            return
        jobset_id, index = self._logical_base(req, results_uri)
        manifest = {
            f"{jobset_id}/{index}/{name}": str(results_uri.join(name))
            for name in (NTUPLE_FILE, SUMMARY_FILE)
        }
        staging.write_uri(
            results_uri.join(MANIFEST_FILE),
            json.dumps(manifest, sort_keys=True).encode("utf-8"),
        )

    @staticmethod
    def _logical_base(req: dict, results_uri: GridUri) -> tuple[str, str]:
        if "jobset_id" in req and "job_index" in req:
            return str(req["jobset_id"]), str(req["job_index"])
        parts = [p for p in results_uri.path.split("/") if p]
        if len(parts) >= 2:
            return parts[-2], parts[-1]
        return "adhoc", "0"

    def _simulate_work(self, job: _SiteJob, seconds: float) -> None:
        deadline = time.monotonic() + seconds
        while time.monotonic() < deadline:
            if job.cancel_requested:
                return
            time.sleep(min(_CANCEL_POLL, max(0.0, deadline - time.monotonic())))

    def _canceled(self, job: _SiteJob) -> bool:
        with self._lock:
            return job.cancel_requested or job.state is not JobState.ACTIVE

    def _cleanup(self, job: _SiteJob, failed: bool) -> None:
        # CLEANUP: the workdir always goes; partially staged results go too
        # when the job did not finish cleanly.
        if job.workdir and job.workdir.exists():
            shutil.rmtree(job.workdir, ignore_errors=True)
        if failed or job.cancel_requested:
            try:
                staging.delete_uri(parse_grid_uri(str(job.request["results_uri"])))
            except errors.GridGateError:
                pass


def start_site(config: SiteConfig) -> Site:
    """Spin up one site; both endpoints answer PING once this returns."""
    return Site(config).start()
