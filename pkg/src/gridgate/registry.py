"""Persistent database of compute resources, named active sets, and
availability probing.

The registry is one JSON file with atomic replace-on-write; reads are
concurrent, writes serialize on a lock and are persisted before they become
visible. Availability probes never mutate the registry.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from . import wire
from .credentials import ProxyCredential, Validity, validate
from .errors import EmptySet, UnknownActiveSet, UnknownSite, ValidationError
from .model import JobmanagerKind, format_ts, parse_ts, utcnow
from .persist import atomic_write_json, load_json


@dataclass(frozen=True)
class ResourceRecord:
    """Cluster, grid, and application configuration for one site."""

    site_id: str
    os: str
    runtime_version: str
    cpu_count: int
    jobmanager_kind: JobmanagerKind
    jobmanager_contact: str
    fileserver_contact: str
    speed_factor: float = 1.0
    firewall_ports: tuple[int, int] | None = None
    app_install_path: str | None = None

    def __post_init__(self) -> None:
        if not self.site_id:
            raise ValidationError("site_id must be non-empty")
        if self.cpu_count < 1:
            raise ValidationError("cpu_count must be >= 1")
        if not self.speed_factor > 0:
            raise ValidationError("speed_factor must be > 0")
        if self.firewall_ports is not None:
            lo, hi = self.firewall_ports
            if not (1 <= lo <= hi <= 65535):
                raise ValidationError(f"bad firewall port range {self.firewall_ports}")

    @property
    def power(self) -> float:
        """Relative computing power: cpu_count x speed_factor."""
        return self.cpu_count * self.speed_factor

    def to_json(self) -> dict:
        return {
            "site_id": self.site_id,
            "os": self.os,
            "runtime_version": self.runtime_version,
            "cpu_count": self.cpu_count,
            "speed_factor": self.speed_factor,
            "firewall_ports": list(self.firewall_ports) if self.firewall_ports else None,
            "jobmanager_kind": self.jobmanager_kind.value,
            "jobmanager_contact": self.jobmanager_contact,
            "fileserver_contact": self.fileserver_contact,
            "app_install_path": self.app_install_path,
        }

    @staticmethod
    def from_json(obj: dict) -> ResourceRecord:
        try:
            ports = obj.get("firewall_ports")
            return ResourceRecord(
                site_id=str(obj["site_id"]),
                os=str(obj.get("os", "")),
                runtime_version=str(obj.get("runtime_version", "")),
                cpu_count=int(obj["cpu_count"]),
                speed_factor=float(obj.get("speed_factor", 1.0)),
                firewall_ports=(int(ports[0]), int(ports[1])) if ports else None,
                jobmanager_kind=JobmanagerKind.parse(str(obj["jobmanager_kind"])),
                jobmanager_contact=str(obj["jobmanager_contact"]),
                fileserver_contact=str(obj["fileserver_contact"]),
                app_install_path=obj.get("app_install_path"),
            )
        except KeyError as exc:
            raise ValidationError(f"resource record missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"bad resource record: {exc}") from None


@dataclass(frozen=True)
class ActiveSet:
    name: str
    site_ids: tuple[str, ...]

    def to_json(self) -> dict:
        return {"name": self.name, "site_ids": list(self.site_ids)}

    @staticmethod
    def from_json(obj: dict) -> ActiveSet:
        return ActiveSet(name=str(obj["name"]), site_ids=tuple(obj["site_ids"]))


@dataclass(frozen=True)
class AvailabilityReport:
    site_id: str
    auth_ok: bool
    jobmanager_ok: bool
    fileserver_ok: bool
    probed_at: datetime

    def to_json(self) -> dict:
        return {
            "site_id": self.site_id,
            "auth_ok": self.auth_ok,
            "jobmanager_ok": self.jobmanager_ok,
            "fileserver_ok": self.fileserver_ok,
            "probed_at": format_ts(self.probed_at),
        }

    @staticmethod
    def from_json(obj: dict) -> AvailabilityReport:
        return AvailabilityReport(
            site_id=str(obj["site_id"]),
            auth_ok=bool(obj["auth_ok"]),
            jobmanager_ok=bool(obj["jobmanager_ok"]),
            fileserver_ok=bool(obj["fileserver_ok"]),
            probed_at=parse_ts(obj["probed_at"]),
        )


def _ping_ok(endpoint: str, timeout: float) -> bool:
    try:
        wire.ping(endpoint, timeout=timeout)
        return True
    except Exception:
        return False


class ResourceRegistry:
    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.RLock()
        self._resources: dict[str, ResourceRecord] = {}
        self._active_sets: dict[str, ActiveSet] = {}
        data = load_json(self._path)
        if data is not None:
            for obj in data.get("resources", []):
                rec = ResourceRecord.from_json(obj)
                self._resources[rec.site_id] = rec
            for obj in data.get("active_sets", []):
                aset = ActiveSet.from_json(obj)
                self._active_sets[aset.name] = aset

    @property
    def path(self) -> Path:
        return self._path

    # -- resources ---------------------------------------------------------

    def upsert_resource(self, record: ResourceRecord) -> str:
        with self._lock:
            self._resources[record.site_id] = record
            self._save()
        return record.site_id

    def get_resource(self, site_id: str) -> ResourceRecord:
        with self._lock:
            try:
                return self._resources[site_id]
            except KeyError:
                raise UnknownSite(f"no such site {site_id!r}") from None

    def has_resource(self, site_id: str) -> bool:
        with self._lock:
            return site_id in self._resources

    def list_resources(self) -> list[ResourceRecord]:
        with self._lock:
            return sorted(self._resources.values(), key=lambda r: r.site_id)

    def remove_resource(self, site_id: str) -> None:
        with self._lock:
            if site_id not in self._resources:
                raise UnknownSite(f"no such site {site_id!r}")
            del self._resources[site_id]
            self._save()

    # -- active sets -------------------------------------------------------

    def define_active_set(self, name: str, site_ids: list[str]) -> ActiveSet:
        if not name:
            raise ValidationError("active set name must be non-empty")
        if not site_ids:
            raise EmptySet(f"active set {name!r} has no members")
        if len(set(site_ids)) != len(site_ids):
            raise ValidationError(f"active set {name!r} has duplicate members")
        with self._lock:
            for site_id in site_ids:
                if site_id not in self._resources:
                    raise UnknownSite(f"active set member {site_id!r} is not registered")
            aset = ActiveSet(name=name, site_ids=tuple(site_ids))
            self._active_sets[name] = aset
            self._save()
            return aset

    def get_active_set(self, name: str) -> ActiveSet:
        with self._lock:
            try:
                return self._active_sets[name]
            except KeyError:
                raise UnknownActiveSet(f"no such active set {name!r}") from None

    def list_active_sets(self) -> list[ActiveSet]:
        with self._lock:
            return sorted(self._active_sets.values(), key=lambda s: s.name)

    # -- probing -----------------------------------------------------------

    def test_availability(self, site_id: str, cred: ProxyCredential,
                          timeout: float = 5.0) -> AvailabilityReport:
        record = self.get_resource(site_id)
        return AvailabilityReport(
            site_id=site_id,
            auth_ok=validate(cred) is Validity.VALID,
            jobmanager_ok=_ping_ok(record.jobmanager_contact, timeout),
            fileserver_ok=_ping_ok(record.fileserver_contact, timeout),
            probed_at=utcnow(),
        )

    # -- persistence -------------------------------------------------------

    def _save(self) -> None:
        atomic_write_json(
            self._path,
            {
                "resources": [r.to_json() for r in self.list_resources()],
                "active_sets": [s.to_json() for s in self.list_active_sets()],
            },
        )
