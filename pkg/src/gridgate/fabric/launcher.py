"""Run a set of simulated sites from a JSON config, for demos and manual use.

The config is {"sites": [SiteConfig...]}; with --registry-out the launcher
also writes a portal-ready registry file (every site registered, plus one
"all" active set), using the actual bound ports.
"""

from __future__ import annotations

import argparse
import json
import signal
import threading
from pathlib import Path

from ..persist import atomic_write_json
from .site import Site, SiteConfig, start_site


def resource_json(site: Site) -> dict:
    cfg = site.config
    return {
        "site_id": cfg.site_id,
        "os": "sim-linux",
        "runtime_version": "1.0",
        "cpu_count": cfg.cpu_count,
        "speed_factor": 1.0,
        "firewall_ports": None,
        "jobmanager_kind": cfg.jobmanager_kind.value,
        "jobmanager_contact": f"{site.jobmanager_endpoint}/jobmanager-{cfg.jobmanager_kind.value.lower()}",
        "fileserver_contact": site.fileserver_endpoint,
        "app_install_path": cfg.app_install_path,
    }


def write_registry(sites: list[Site], path: str | Path) -> None:
    atomic_write_json(
        path,
        {
            "resources": [resource_json(s) for s in sites],
            "active_sets": [{"name": "all", "site_ids": [s.site_id for s in sites]}],
        },
    )


def start_fabric(config_obj: dict) -> list[Site]:
    return [start_site(SiteConfig.from_json(obj)) for obj in config_obj["sites"]]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="gridgate-fabric",
                                     description="Run simulated grid sites.")
    parser.add_argument("config", help="fabric config JSON ({'sites': [...]})")
    parser.add_argument("--registry-out", help="write a portal registry file with the bound endpoints")
    args = parser.parse_args(argv)

    config_obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
    sites = start_fabric(config_obj)
    for site in sites:
        print(f"site {site.site_id} jobmanager={site.jobmanager_endpoint} "
              f"fileserver={site.fileserver_endpoint}")
    if args.registry_out:
        write_registry(sites, args.registry_out)
        print(f"registry written to {args.registry_out}")

    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    stop.wait()
    for site in sites:
        site.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
