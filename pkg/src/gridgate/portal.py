"""The portal: HTTP+JSON API over every capability, credential-gated, with
the submission archive and background submission/polling.

POST /jobsets validates, archives, and plans synchronously, then returns
202 with the jobset id while per-site workers submit in the background, so
endpoint latency is independent of job count. All other state-changing
routes are plain synchronous calls into the underlying stores.
"""

from __future__ import annotations

import argparse
import json
import logging
import mimetypes
import re
import threading
import time
import urllib.parse
from dataclasses import dataclass, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import dispatch, errors
from .archive import Archive, new_jobset_id
from .credentials import (
    ProxyCredential,
    Validity,
    fetch_credential,
    load_credential,
    validate,
)
from .dispatch import plan_submission, submit_plan
from .errors import AuthError, GridGateError, ValidationError
from .fnv import fnv1a_hex
from .model import JobRecord, JobsetSpec, job_id_for, parse_grid_uri
from .monitor import JobMonitor
from .registry import ActiveSet, ResourceRecord, ResourceRegistry
from .staging import ReplicaCatalog, ToolBundle, read_uri

log = logging.getLogger(__name__)

TOOL_BUNDLE_NAME = "gridgate-tools"
TOOL_BUNDLE_VERSION = "0.1.0"

_STATUS_BY_ERROR = {
    "AuthError": 401,
    "NotFound": 404,
    "UnknownSite": 404,
    "UnknownActiveSet": 404,
    "UnknownJobset": 404,
    "UnknownJob": 404,
    "UnknownContact": 404,
    "SourceMissing": 404,
    "ValidationError": 422,
    "MalformedUri": 422,
    "MalformedCredential": 422,
    "MalformedRequest": 422,
    "MalformedDescription": 422,
    "EmptySet": 422,
    "StaleActiveSet": 422,
    "EmptyPowerList": 422,
    "QueueFull": 503,
    "DestinationUnreachable": 503,
    "BindError": 503,
}


@dataclass
class PortalConfig:
    listen: str = "127.0.0.1:8700"
    registry_path: str = "state/registry.json"
    archive_path: str = "state/archive.json"
    proxy_dir: str | None = None
    poll_interval: float = 2.0
    ui_dir: str | None = None
    proxy_url: str | None = None
    probe_timeout: float = 5.0

    @staticmethod
    def parse(text: str) -> "PortalConfig":
        """key = value lines; '#' starts a comment, quotes are optional."""
        values: dict[str, str] = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"bad config line {raw!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip().strip("\"'")
        cfg = PortalConfig()
        if "listen" in values:
            cfg.listen = values["listen"]
        if "registry" in values:
            cfg.registry_path = values["registry"]
        if "archive" in values:
            cfg.archive_path = values["archive"]
        if "proxy_dir" in values:
            cfg.proxy_dir = values["proxy_dir"]
        if "poll_interval" in values:
            cfg.poll_interval = float(values["poll_interval"])
        if "ui" in values:
            cfg.ui_dir = values["ui"]
        if "proxy_url" in values:
            cfg.proxy_url = values["proxy_url"]
        if "probe_timeout" in values:
            cfg.probe_timeout = float(values["probe_timeout"])
        return cfg

    @staticmethod
    def load(path: str | Path) -> "PortalConfig":
        return PortalConfig.parse(Path(path).read_text(encoding="utf-8"))


class PortalService:
    def __init__(self, config: PortalConfig):
        self.config = config
        if config.proxy_url:
            self.credential = fetch_credential(config.proxy_url)
        else:
            self.credential = load_credential(config.proxy_dir)
        self.registry = ResourceRegistry(config.registry_path)
        self.archive = Archive(config.archive_path)
        state_dir = Path(config.archive_path).parent
        self.catalog = ReplicaCatalog(state_dir / "replicas.json")
        self.monitor = JobMonitor(
            self.registry, self.archive, self.catalog, poll_interval=config.poll_interval
        )
        self.tool_bundle = self._build_tool_bundle(state_dir)
        host, port = config.listen.split(":")
        handler = _make_handler(self)
        self._server = ThreadingHTTPServer((host, int(port)), handler)
        self._server.daemon_threads = True  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None
        self._save_gate = threading.Lock()
        self._last_save = 0.0

    @staticmethod
    def _build_tool_bundle(state_dir: Path) -> ToolBundle:
        """The portal's own tool payload, staged onto sites before first use."""
        payload = json.dumps(
            {"bundle": TOOL_BUNDLE_NAME, "version": TOOL_BUNDLE_VERSION,
             "tools": ["wrapper", "transfer", "register"]},
            sort_keys=True,
        ).encode("utf-8")
        path = state_dir / "tools" / f"{TOOL_BUNDLE_NAME}-{TOOL_BUNDLE_VERSION}.bin"
        path.parent.mkdir(parents=True, exist_ok=True)
        if not path.is_file() or path.read_bytes() != payload:
            path.write_bytes(payload)
        return ToolBundle(
            name=TOOL_BUNDLE_NAME,
            version=TOOL_BUNDLE_VERSION,
            payload_uri=parse_grid_uri(f"file://{path.resolve()}"),
            checksum=fnv1a_hex(payload),
        )

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "PortalService":
        self._thread = threading.Thread(target=self._server.serve_forever, name="portal-http", daemon=True)
        self._thread.start()
        self.monitor.start()
        return self

    def stop(self) -> None:
        self.monitor.stop()
        self._server.shutdown()
        self._server.server_close()
        self.archive.save_if_dirty()

    def _record_updated(self, _rec) -> None:
        """Per-ack persistence, throttled: submission acks mark the archive
        dirty; at most a few full writes per second, the poller sweep (or
        stop) flushes the rest."""
        self.archive.mark_dirty()
        now = time.monotonic()
        with self._save_gate:
            if now - self._last_save < 0.25:
                return
            self._last_save = now
        self.archive.save()

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    # -- operations ------------------------------------------------------------

    def check_token(self, token: str | None) -> None:
        if not token or token != self.credential.token:
            raise AuthError("missing or unknown proxy token")
        validity = validate(self.credential)
        if validity is not Validity.VALID:
            raise AuthError(f"portal credential is {validity.value}")

    def archive_submission(self, spec_obj: dict) -> str:
        """Assign an id, validate, plan, archive, and launch async submission."""
        spec_obj = dict(spec_obj)
        spec_obj["jobset_id"] = new_jobset_id()
        spec = JobsetSpec.from_json(spec_obj)
        return self._launch(spec)

    def resubmit(self, jobset_id: str) -> str:
        """Clone an archived spec into a fresh jobset with a shifted seed base."""
        old = self.archive.get_entry(jobset_id)
        spec = replace(
            old.spec,
            jobset_id=new_jobset_id(),
            rng_seed_base=old.spec.rng_seed_base + old.spec.job_count,
        )
        return self._launch(spec)

    def _launch(self, spec: JobsetSpec) -> str:
        plan = plan_submission(spec, self.registry)
        records = []
        for alloc in plan.allocations:
            for index in alloc.job_indices:
                records.append(JobRecord.new(job_id_for(spec.jobset_id, index),
                                             spec.jobset_id, alloc.site_id))
        records.sort(key=lambda r: r.job_id)
        self.archive.add_entry(spec, plan, records)
        submit_plan(
            plan,
            spec,
            self.registry,
            self.credential,
            tool=self.tool_bundle,
            records=records,
            on_update=self._record_updated,
            record_lock=self.archive.lock,
        )
        return spec.jobset_id


def serve(config: PortalConfig) -> PortalService:
    return PortalService(config).start()


# --------------------------------------------------------------------------
# HTTP plumbing

_ROUTES: list[tuple[str, re.Pattern, str]] = [
    ("GET", re.compile(r"^/$"), "root"),
    ("POST", re.compile(r"^/resources$"), "post_resource"),
    ("GET", re.compile(r"^/resources$"), "get_resources"),
    ("POST", re.compile(r"^/resources/(?P<site_id>[^/]+)/probe$"), "probe"),
    ("POST", re.compile(r"^/active-sets$"), "post_active_set"),
    ("GET", re.compile(r"^/active-sets$"), "get_active_sets"),
    ("POST", re.compile(r"^/jobsets$"), "post_jobset"),
    ("GET", re.compile(r"^/jobsets$"), "get_jobsets"),
    ("GET", re.compile(r"^/jobsets/(?P<jobset_id>[^/]+)/summary$"), "get_summary"),
    ("POST", re.compile(r"^/jobsets/(?P<jobset_id>[^/]+)/resubmit$"), "post_resubmit"),
    ("GET", re.compile(r"^/jobsets/(?P<jobset_id>[^/]+)$"), "get_jobset"),
    ("GET", re.compile(r"^/jobs$"), "get_jobs"),
    ("POST", re.compile(r"^/jobs/poll$"), "post_poll"),
    ("POST", re.compile(r"^/jobs/cancel$"), "post_cancel"),
    ("GET", re.compile(r"^/replicas$"), "get_replicas"),
    ("GET", re.compile(r"^/files$"), "get_file"),
]

MAX_BODY = 16 << 20


def _make_handler(service: PortalService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt: str, *args) -> None:
            log.debug("%s " + fmt, self.client_address[0], *args)

        def do_GET(self) -> None:
            self._dispatch("GET")

        def do_POST(self) -> None:
            self._dispatch("POST")

        def _dispatch(self, method: str) -> None:
            parsed = urllib.parse.urlparse(self.path)
            path = parsed.path
            self.query = {k: v[0] for k, v in urllib.parse.parse_qs(parsed.query).items()}
            try:
                if method == "GET" and path.startswith("/ui"):
                    self._serve_ui(path)
                    return
                for route_method, pattern, name in _ROUTES:
                    m = pattern.match(path)
                    if m and route_method == method:
                        service.check_token(self.headers.get("X-Proxy-Token"))
                        getattr(self, name)(**m.groupdict())
                        return
                raise errors.NotFound(f"no route {method} {path}")
            except GridGateError as exc:
                status = _STATUS_BY_ERROR.get(errors.code_of(exc), 500)
                self._json({"error": errors.code_of(exc), "message": str(exc)}, status)
            except Exception as exc:
                log.exception("request failed: %s %s", method, path)
                self._json({"error": "InternalError", "message": str(exc)}, 500)

        # -- helpers ------------------------------------------------------

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY:
                raise ValidationError("request body too large")
            raw = self.rfile.read(length) if length else b"{}"
            try:
                obj = json.loads(raw or b"{}")
            except ValueError as exc:
                raise ValidationError(f"request body is not JSON: {exc}") from None
            if not isinstance(obj, dict):
                raise ValidationError("request body must be a JSON object")
            return obj

        def _json(self, obj, status: int = 200) -> None:
            data = json.dumps(obj).encode("utf-8")
            self._raw(data, status, "application/json")

        def _raw(self, data: bytes, status: int, ctype: str) -> None:
            self.send_response(status)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _serve_ui(self, path: str) -> None:
            if not service.config.ui_dir:
                raise errors.NotFound("no UI directory configured")
            root = Path(service.config.ui_dir).resolve()
            rel = path[len("/ui"):].lstrip("/") or "index.html"
            target = (root / rel).resolve()
            if root != target and root not in target.parents:
                raise errors.NotFound("bad UI path")
            if target.is_dir():
                target = target / "index.html"
            if not target.is_file():
                raise errors.NotFound(f"no UI file {rel}")
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            self._raw(target.read_bytes(), 200, ctype)

        # -- routes --------------------------------------------------------

        def root(self) -> None:
            self._json({"service": "gridgate", "endpoints": [p.pattern for _, p, _ in _ROUTES]})

        def post_resource(self) -> None:
            record = ResourceRecord.from_json(self._body())
            site_id = service.registry.upsert_resource(record)
            self._json({"site_id": site_id})

        def get_resources(self) -> None:
            self._json([r.to_json() for r in service.registry.list_resources()])

        def probe(self, site_id: str) -> None:
            report = service.registry.test_availability(
                site_id, service.credential, timeout=service.config.probe_timeout
            )
            self._json(report.to_json())

        def post_active_set(self) -> None:
            body = self._body()
            aset = service.registry.define_active_set(
                str(body.get("name", "")), list(body.get("site_ids", []))
            )
            self._json(aset.to_json())

        def get_active_sets(self) -> None:
            self._json([s.to_json() for s in service.registry.list_active_sets()])

        def post_jobset(self) -> None:
            jobset_id = service.archive_submission(self._body())
            self._json({"jobset_id": jobset_id}, 202)

        def get_jobsets(self) -> None:
            self._json([e.to_json() for e in service.archive.list_entries()])

        def get_jobset(self, jobset_id: str) -> None:
            self._json(service.archive.get_entry(jobset_id).to_json())

        def post_resubmit(self, jobset_id: str) -> None:
            self._json({"jobset_id": service.resubmit(jobset_id)}, 202)

        def get_summary(self, jobset_id: str) -> None:
            self._json(service.monitor.update_summary(jobset_id).to_json())

        def get_jobs(self) -> None:
            jobset_id = self.query.get("jobset")
            if not jobset_id:
                raise ValidationError("missing ?jobset= parameter")
            with service.archive.lock:
                records = sorted(service.archive.jobs_for(jobset_id), key=lambda r: r.job_id)
                payload = [r.to_json() for r in records]
            self._json(payload)

        def _job_action(self, action) -> None:
            body = self._body()
            ids = [str(j) for j in body.get("job_ids", [])]
            results = action(ids)
            out = []
            for job_id, state in results:
                if state is None:
                    out.append({"job_id": job_id, "error": "UnknownJob"})
                else:
                    out.append({"job_id": job_id, "state": state.value})
            self._json(out)

        def post_poll(self) -> None:
            self._job_action(service.monitor.poll_jobs)

        def post_cancel(self) -> None:
            self._job_action(
                lambda ids: service.monitor.cancel_jobs(ids, service.credential)
            )

        def get_replicas(self) -> None:
            name = self.query.get("name")
            if name is None:
                raise ValidationError("missing ?name= parameter")
            entry = service.catalog.get_entry(name)
            if entry is None:
                self._json({"logical_name": name, "physical": [], "registered_at": []})
            else:
                self._json(entry.to_json())

        def get_file(self) -> None:
            uri_text = self.query.get("uri")
            if not uri_text:
                raise ValidationError("missing ?uri= parameter")
            data = read_uri(parse_grid_uri(uri_text))
            self._raw(data, 200, "text/plain; charset=utf-8")

    return Handler


# --------------------------------------------------------------------------
# entry point

def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="gridgate-portal", description="Run the portal service.")
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--listen", help="host:port (overrides config)")
    parser.add_argument("--registry", help="registry JSON path")
    parser.add_argument("--archive", help="archive JSON path")
    parser.add_argument("--proxy-dir", help="credential directory")
    parser.add_argument("--poll-interval", type=float, help="background poll interval seconds")
    parser.add_argument("--ui", help="static UI directory served at /ui/")
    args = parser.parse_args(argv)

    config = PortalConfig.load(args.config) if args.config else PortalConfig()
    if args.listen:
        config.listen = args.listen
    if args.registry:
        config.registry_path = args.registry
    if args.archive:
        config.archive_path = args.archive
    if args.proxy_dir:
        config.proxy_dir = args.proxy_dir
    if args.poll_interval is not None:
        config.poll_interval = args.poll_interval
    if args.ui:
        config.ui_dir = args.ui

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    service = serve(config)
    print(f"portal listening on {service.base_url}")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
