from __future__ import annotations

import sys
from datetime import timedelta
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridgate import credentials
from gridgate.fabric.site import Site, SiteConfig, start_site
from gridgate.model import JobmanagerKind
from gridgate.registry import ResourceRecord, ResourceRegistry


@pytest.fixture
def cred():
    return credentials.issue("CN=alice", timedelta(hours=4))


@pytest.fixture
def expired_cred():
    return credentials.issue("CN=alice", timedelta(hours=-1))


@pytest.fixture
def site_factory(tmp_path):
    """Makes running sites that are stopped at teardown."""
    sites: list[Site] = []
    counter = [0]

    def make(site_id: str | None = None, cpu_count: int = 2,
             kind: JobmanagerKind = JobmanagerKind.BATCH, **kwargs) -> Site:
        counter[0] += 1
        site_id = site_id or f"site{counter[0]:02d}"
        config = SiteConfig(
            site_id=site_id,
            cpu_count=cpu_count,
            jobmanager_kind=kind,
            base_dir=str(tmp_path / "fabric" / site_id),
            seconds_per_event=kwargs.pop("seconds_per_event", 0.001),
            **kwargs,
        )
        site = start_site(config)
        sites.append(site)
        return site

    yield make
    for site in sites:
        site.stop()


def record_for(site: Site, **overrides) -> ResourceRecord:
    """Registry record pointing at a running site's real endpoints."""
    fields = dict(
        site_id=site.site_id,
        os="sim-linux",
        runtime_version="1.0",
        cpu_count=site.config.cpu_count,
        jobmanager_kind=site.config.jobmanager_kind,
        jobmanager_contact=(
            f"{site.jobmanager_endpoint}/jobmanager-{site.config.jobmanager_kind.value.lower()}"
        ),
        fileserver_contact=site.fileserver_endpoint,
    )
    fields.update(overrides)
    return ResourceRecord(**fields)


@pytest.fixture
def registry(tmp_path):
    return ResourceRegistry(tmp_path / "registry.json")


@pytest.fixture
def app_bundle_uri(tmp_path):
    path = tmp_path / "bundles" / "app.tar"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"pretend application libraries\n" * 8)
    return f"file://{path}"


@pytest.fixture
def results_base_uri(tmp_path):
    return f"file://{tmp_path / 'results'}"
