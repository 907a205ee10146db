"""Non-interactive command-line client of the portal API.

Exit codes: 0 success, 1 request/portal error, 2 usage error. All state
lives server-side; `batch` in particular keeps nothing between rounds but
its counter, so it is safe to kill, restart, or drive from cron with
max_rounds=1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .client import PortalClient, PortalError
from .credentials import load_credential
from .errors import GridGateError
from .model import job_index_of

ENV_PORTAL = "GRIDGATE_PORTAL"
DEFAULT_PORTAL = "http://127.0.0.1:8700"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridgate",
        description="Submit, monitor, and cancel jobsets against a running portal.",
    )
    parser.add_argument("--portal", default=os.environ.get(ENV_PORTAL, DEFAULT_PORTAL),
                        help="portal base URL (or env GRIDGATE_PORTAL)")
    parser.add_argument("--proxy-dir", default=None, help="credential directory")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    p_submit = sub.add_parser("submit", help="submit a jobset spec file")
    p_submit.add_argument("spec", help="path to a jobset spec JSON file")

    p_status = sub.add_parser("status", help="print one line per job of a jobset")
    p_status.add_argument("--jobset", required=True)

    p_cancel = sub.add_parser("cancel", help="cancel jobs by id")
    p_cancel.add_argument("--jobs", required=True, nargs="+")

    p_probe = sub.add_parser("probe", help="probe a site's availability")
    p_probe.add_argument("site")

    p_batch = sub.add_parser("batch", help="submit a template jobset every interval")
    p_batch.add_argument("policy", help="path to a batch policy JSON file")

    sub.add_parser("help", help="show usage")
    return parser


def _client(args: argparse.Namespace) -> PortalClient:
    cred = load_credential(args.proxy_dir)
    return PortalClient(args.portal, cred.token)


def _emit(args: argparse.Namespace, obj, plain: str) -> None:
    if args.json:
        print(json.dumps(obj))
    else:
        print(plain)


def cmd_submit(args: argparse.Namespace) -> int:
    spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    jobset_id = _client(args).submit_jobset(spec)
    _emit(args, {"jobset_id": jobset_id}, jobset_id)
    return 0


def cmd_status(args: argparse.Namespace) -> int:
    records = _client(args).jobs(args.jobset)
    records.sort(key=lambda r: job_index_of(r["job_id"]))
    if args.json:
        print(json.dumps(records))
    else:
        for rec in records:
            print(f"job {rec['job_id']} {rec['state']}")
    return 0


def cmd_cancel(args: argparse.Namespace) -> int:
    results = _client(args).cancel(list(args.jobs))
    if args.json:
        print(json.dumps(results))
    else:
        for entry in results:
            state = entry.get("state", entry.get("error"))
            print(f"job {entry['job_id']} {state}")
    return 0


def cmd_probe(args: argparse.Namespace) -> int:
    report = _client(args).probe(args.site)
    flags = " ".join(
        f"{key}={'ok' if report[key] else 'FAIL'}"
        for key in ("auth_ok", "jobmanager_ok", "fileserver_ok")
    )
    _emit(args, report, f"site {report['site_id']} {flags}")
    return 0


def cmd_batch(args: argparse.Namespace) -> int:
    policy = json.loads(Path(args.policy).read_text(encoding="utf-8"))
    template_path = Path(policy["jobset_template"])
    interval = float(policy["interval"])
    if interval <= 0:
        print("error: batch interval must be > 0", file=sys.stderr)
        return 2
    max_rounds = policy.get("max_rounds")
    rounds = 0
    client = _client(args)
    while max_rounds is None or rounds < int(max_rounds):
        if rounds:
            time.sleep(interval)
        spec = json.loads(template_path.read_text(encoding="utf-8"))
        jobset_id = client.submit_jobset(spec)
        _emit(args, {"round": rounds, "jobset_id": jobset_id}, jobset_id)
        sys.stdout.flush()
        rounds += 1
    return 0


_COMMANDS = {
    "submit": cmd_submit,
    "status": cmd_status,
    "cancel": cmd_cancel,
    "probe": cmd_probe,
    "batch": cmd_batch,
}


def run_cli(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; pass that through
        return int(exc.code or 0)
    if args.command == "help":
        parser.print_help()
        return 0
    try:
        return _COMMANDS[args.command](args)
    except (PortalError, GridGateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as exc:
        print(f"error: bad input file: {exc!r}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 0


def main(argv: list[str] | None = None) -> int:
    return run_cli(argv)


if __name__ == "__main__":
    raise SystemExit(main())
