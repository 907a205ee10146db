"""URI-addressed file movement, idempotent tool-cache deployment, and the
replica catalog.

file:// URIs hit the local filesystem, gsiftp:// URIs speak the fabric
fileserver protocol, and http:// URIs are read-only fetches. The tool cache
lives under <site base_dir>/toolcache/<name>/<version>/ with the checksum
marker written last, so a cache entry is complete exactly when its marker
matches; the highest version present is the active one.
"""

from __future__ import annotations

import shutil
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

from . import wire
from .credentials import ProxyCredential, Validity, validate
from .errors import (
    AuthError,
    ChecksumMismatch,
    DestinationUnreachable,
    GridGateError,
    NotFound,
    SourceMissing,
)
from .fnv import fnv1a_hex
from .model import DEFAULT_PORTS, GridUri, format_ts, parse_grid_uri, parse_ts, utcnow
from .persist import atomic_write_json, load_json

if TYPE_CHECKING:
    from .registry import ResourceRegistry

DEFAULT_TIMEOUT = 5.0

TOOLCACHE_DIR = "toolcache"
PAYLOAD_NAME = "payload.bin"
MARKER_NAME = ".checksum"


def _fs_endpoint(uri: GridUri) -> str:
    port = uri.port if uri.port is not None else DEFAULT_PORTS["gsiftp"]
    return f"{uri.host}:{port}"


def read_uri(uri: GridUri, timeout: float = DEFAULT_TIMEOUT) -> bytes:
    """Raw read; missing or unreachable sources raise SourceMissing."""
    if uri.scheme == "file":
        path = Path(uri.path)
        if not path.is_file():
            raise SourceMissing(f"no such file {uri}")
        return path.read_bytes()
    if uri.scheme == "gsiftp":
        try:
            return wire.fs_get(_fs_endpoint(uri), uri.path, timeout=timeout)
        except NotFound as exc:
            raise SourceMissing(str(exc)) from None
        except (OSError, GridGateError) as exc:
            raise SourceMissing(f"cannot read {uri}: {exc}") from None
    if uri.scheme == "http":
        url = str(uri)
        try:
            with urllib.request.urlopen(url, timeout=timeout) as resp:
                return resp.read()
        except (urllib.error.URLError, OSError) as exc:
            raise SourceMissing(f"cannot read {url}: {exc}") from None
    raise SourceMissing(f"unreadable scheme {uri.scheme!r}")


def write_uri(uri: GridUri, data: bytes, timeout: float = DEFAULT_TIMEOUT) -> int:
    """Raw write with parent creation; failures raise DestinationUnreachable."""
    if uri.scheme == "file":
        path = Path(uri.path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
        except OSError as exc:
            raise DestinationUnreachable(f"cannot write {uri}: {exc}") from None
        return len(data)
    if uri.scheme == "gsiftp":
        try:
            return wire.fs_put(_fs_endpoint(uri), uri.path, data, timeout=timeout)
        except (OSError, GridGateError) as exc:
            raise DestinationUnreachable(f"cannot write {uri}: {exc}") from None
    raise DestinationUnreachable(f"scheme {uri.scheme!r} is not writable")


def delete_uri(uri: GridUri, timeout: float = DEFAULT_TIMEOUT) -> None:
    """Best-effort recursive delete (failed-job results cleanup)."""
    try:
        if uri.scheme == "file":
            path = Path(uri.path)
            if path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
            elif path.exists():
                path.unlink(missing_ok=True)
        elif uri.scheme == "gsiftp":
            wire.fs_del(_fs_endpoint(uri), uri.path, timeout=timeout)
    except (OSError, GridGateError):
        pass


def transfer(src: GridUri, dst: GridUri, cred: ProxyCredential,
             timeout: float = DEFAULT_TIMEOUT) -> int:
    """Copy src to dst byte-identically; returns the byte count."""
    if validate(cred) is not Validity.VALID:
        raise AuthError(f"credential is {validate(cred).value}")
    data = read_uri(src, timeout=timeout)
    return write_uri(dst, data, timeout=timeout)


# --------------------------------------------------------------------------
# tool bundles

def version_key(version: str) -> tuple:
    """Total order on versions: numeric dotted parts, strings break ties."""
    parts = []
    for part in version.split("."):
        if part.isdigit():
            parts.append((0, int(part), ""))
        else:
            parts.append((1, 0, part))
    return tuple(parts)


@dataclass(frozen=True)
class ToolBundle:
    name: str
    version: str
    payload_uri: GridUri
    checksum: str

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "payload_uri": str(self.payload_uri),
            "checksum": self.checksum,
        }

    @staticmethod
    def from_json(obj: dict) -> ToolBundle:
        return ToolBundle(
            name=str(obj["name"]),
            version=str(obj["version"]),
            payload_uri=parse_grid_uri(obj["payload_uri"]),
            checksum=str(obj["checksum"]),
        )


class CacheOutcome(Enum):
    FRESH = "Fresh"
    UPDATED = "Updated"


_cache_locks: dict[tuple[str, str, str], threading.Lock] = {}
_cache_locks_guard = threading.Lock()


def _cache_lock(site_id: str, bundle: ToolBundle) -> threading.Lock:
    key = (site_id, bundle.name, bundle.version)
    with _cache_locks_guard:
        return _cache_locks.setdefault(key, threading.Lock())


def cache_paths(bundle: ToolBundle) -> tuple[str, str]:
    base = f"/{TOOLCACHE_DIR}/{bundle.name}/{bundle.version}"
    return f"{base}/{PAYLOAD_NAME}", f"{base}/{MARKER_NAME}"


def ensure_toolcache(registry: "ResourceRegistry", site_id: str, bundle: ToolBundle,
                     cred: ProxyCredential, timeout: float = DEFAULT_TIMEOUT) -> CacheOutcome:
    """Make the site's cache hold bundle.version; at most one transfer ever
    happens per (site, version), even under concurrent callers."""
    if validate(cred) is not Validity.VALID:
        raise AuthError(f"credential is {validate(cred).value}")
    record = registry.get_resource(site_id)
    endpoint = record.fileserver_contact
    payload_path, marker_path = cache_paths(bundle)
    with _cache_lock(site_id, bundle):
        try:
            marker = wire.fs_get(endpoint, marker_path, timeout=timeout)
            if marker.decode("utf-8", "replace").strip() == bundle.checksum:
                return CacheOutcome.FRESH
        except NotFound:
            pass
        except (OSError, GridGateError) as exc:
            raise DestinationUnreachable(f"cache check failed for {site_id}: {exc}") from None
        payload = read_uri(bundle.payload_uri, timeout=timeout)
        if fnv1a_hex(payload) != bundle.checksum:
            raise ChecksumMismatch(
                f"bundle {bundle.name} {bundle.version}: payload does not match {bundle.checksum}"
            )
        try:
            wire.fs_put(endpoint, payload_path, payload, timeout=timeout)
            wire.fs_put(endpoint, marker_path, bundle.checksum.encode("utf-8"), timeout=timeout)
        except (OSError, GridGateError) as exc:
            raise DestinationUnreachable(f"cache deploy failed for {site_id}: {exc}") from None
        return CacheOutcome.UPDATED


def active_cache_version(base_dir: str | Path, name: str) -> str | None:
    """Highest complete version in a site-local cache directory, if any."""
    root = Path(base_dir) / TOOLCACHE_DIR / name
    if not root.is_dir():
        return None
    versions = [p.name for p in root.iterdir() if (p / MARKER_NAME).is_file()]
    if not versions:
        return None
    return max(versions, key=version_key)


# --------------------------------------------------------------------------
# replica catalog

@dataclass
class ReplicaEntry:
    logical_name: str
    physical: list[GridUri] = field(default_factory=list)
    registered_at: list[datetime] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "logical_name": self.logical_name,
            "physical": [str(u) for u in self.physical],
            "registered_at": [format_ts(t) for t in self.registered_at],
        }

    @staticmethod
    def from_json(obj: dict) -> ReplicaEntry:
        return ReplicaEntry(
            logical_name=str(obj["logical_name"]),
            physical=[parse_grid_uri(u) for u in obj["physical"]],
            registered_at=[parse_ts(t) for t in obj["registered_at"]],
        )


def logical_name_for(jobset_id: str, job_index: int, filename: str) -> str:
    return f"{jobset_id}/{job_index}/{filename}"


class ReplicaCatalog:
    """Append-only logical-name -> physical-URI mapping, persisted as JSON."""

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._lock = threading.RLock()
        self._entries: dict[str, ReplicaEntry] = {}
        data = load_json(self._path)
        if data is not None:
            for obj in data:
                entry = ReplicaEntry.from_json(obj)
                self._entries[entry.logical_name] = entry

    def register_replica(self, logical_name: str, uri: GridUri) -> ReplicaEntry:
        with self._lock:
            entry = self._entries.get(logical_name)
            if entry is None:
                entry = ReplicaEntry(logical_name)
                self._entries[logical_name] = entry
            if str(uri) not in {str(u) for u in entry.physical}:
                entry.physical.append(uri)
                entry.registered_at.append(utcnow())
                self._save()
            return entry

    def lookup_replica(self, logical_name: str) -> list[GridUri]:
        with self._lock:
            entry = self._entries.get(logical_name)
            return list(entry.physical) if entry else []

    def get_entry(self, logical_name: str) -> ReplicaEntry | None:
        with self._lock:
            return self._entries.get(logical_name)

    def _save(self) -> None:
        atomic_write_json(self._path, [e.to_json() for e in self._entries.values()])
