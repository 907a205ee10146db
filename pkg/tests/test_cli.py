from __future__ import annotations

import json
import time
from types import SimpleNamespace

import pytest

from conftest import record_for
from gridgate.cli import run_cli
from gridgate.credentials import save_credential
from gridgate.portal import PortalConfig, serve


@pytest.fixture
def live(tmp_path, cred, site_factory, app_bundle_uri, results_base_uri):
    proxy_dir = tmp_path / "proxy"
    save_credential(cred, proxy_dir)
    config = PortalConfig(
        listen="127.0.0.1:0",
        registry_path=str(tmp_path / "state" / "registry.json"),
        archive_path=str(tmp_path / "state" / "archive.json"),
        proxy_dir=str(proxy_dir),
        poll_interval=0.15,
        probe_timeout=1.0,
    )
    service = serve(config)
    sites = [site_factory(f"s{i:02d}", cpu_count=2) for i in range(2)]
    for site in sites:
        service.registry.upsert_resource(record_for(site))
    service.registry.define_active_set("testbed", [s.site_id for s in sites])

    spec_path = tmp_path / "jobset.json"
    spec_path.write_text(json.dumps({
        "jobset_id": "x",
        "app_bundle": app_bundle_uri,
        "input_data": [],
        "results_base": results_base_uri,
        "events_per_job": 1,
        "physics_model": "atlfast",
        "job_count": 2,
        "rng_seed_base": 3,
        "active_set": "testbed",
    }))
    yield SimpleNamespace(service=service, proxy_dir=proxy_dir, spec_path=spec_path,
                          tmp=tmp_path)
    service.stop()


def cli(live, *args: str) -> int:
    return run_cli(["--portal", live.service.base_url, "--proxy-dir", str(live.proxy_dir),
                    *args])


def test_submit_prints_id(live, capsys):
    assert cli(live, "submit", str(live.spec_path)) == 0
    out = capsys.readouterr().out.strip()
    assert out.startswith("js-")


def test_status_lines_sorted_by_index(live, capsys):
    cli(live, "submit", str(live.spec_path))
    jobset_id = capsys.readouterr().out.strip()
    deadline = time.monotonic() + 15
    while time.monotonic() < deadline:
        assert cli(live, "status", "--jobset", jobset_id) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        if all(line.endswith("DONE") for line in lines):
            break
        time.sleep(0.1)
    assert len(lines) == 2
    assert all(line.startswith(f"job {jobset_id}.") for line in lines)
    ids = [line.split()[1] for line in lines]
    assert ids == sorted(ids)


def test_status_unknown_jobset_exits_1(live, capsys):
    assert cli(live, "status", "--jobset", "bogus") == 1
    assert "error" in capsys.readouterr().err


def test_cancel_jobs(live, capsys):
    cli(live, "submit", str(live.spec_path))
    jobset_id = capsys.readouterr().out.strip()
    job_ids = [f"{jobset_id}.0000", f"{jobset_id}.0001"]
    assert cli(live, "cancel", "--jobs", *job_ids) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2


def test_probe_output(live, capsys):
    assert cli(live, "probe", "s00") == 0
    out = capsys.readouterr().out
    assert "auth_ok=ok" in out and "jobmanager_ok=ok" in out


def test_json_flag(live, capsys):
    assert run_cli(["--portal", live.service.base_url, "--proxy-dir", str(live.proxy_dir),
                    "--json", "probe", "s00"]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj["site_id"] == "s00"


def test_usage_error_exits_2(live, capsys):
    assert cli(live, "unknown-subcommand") == 2
    assert run_cli([]) == 2


def test_unreachable_portal_exits_1(live, capsys):
    code = run_cli(["--portal", "http://127.0.0.1:1", "--proxy-dir", str(live.proxy_dir),
                    "status", "--jobset", "x"])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_batch_three_rounds(live, capsys, tmp_path):
    policy = tmp_path / "policy.json"
    policy.write_text(json.dumps({
        "jobset_template": str(live.spec_path),
        "interval": 0.4,
        "max_rounds": 3,
    }))
    start = time.monotonic()
    assert cli(live, "batch", str(policy)) == 0
    elapsed = time.monotonic() - start
    ids = capsys.readouterr().out.strip().splitlines()
    assert len(ids) == 3
    assert len(set(ids)) == 3
    assert elapsed >= 0.8  # two inter-round sleeps
    assert len(live.service.archive.list_entries()) == 3


def test_batch_invalid_interval_exits_2(live, capsys, tmp_path):
    policy = tmp_path / "policy.json"
    policy.write_text(json.dumps({
        "jobset_template": str(live.spec_path), "interval": 0, "max_rounds": 1,
    }))
    assert cli(live, "batch", str(policy)) == 2
