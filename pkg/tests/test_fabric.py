from __future__ import annotations

import json
import time

import pytest

from oracles import bin_counts_reference
from gridgate import wire
from gridgate.errors import (
    AuthError,
    BindError,
    CacheMissing,
    MalformedDescription,
    QueueFull,
    UnknownContact,
)
from gridgate.fabric.app import ntuple_csv, run_simulated_app
from gridgate.fabric.site import Site, SiteConfig, start_site
from gridgate.model import JobState, JobmanagerKind, is_valid_path


def wrapper_request(cred, app_bundle_uri, results_base_uri, jobset="js-t", index=0,
                    events=2, seed=1, **extra):
    req = {
        "jobset_id": jobset,
        "job_index": index,
        "app_bundle": app_bundle_uri,
        "input_uris": [],
        "results_uri": f"{results_base_uri}/{jobset}/{index}/",
        "events": events,
        "model": "atlfast",
        "seed": seed,
        "credential": cred.to_json(),
    }
    req.update(extra)
    return req


def wait_state(endpoint: str, contact: str, timeout: float = 10.0) -> tuple[JobState, int | None]:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        state, exit_code = wire.gram_status(endpoint, contact)
        if state.terminal:
            return state, exit_code
        time.sleep(0.01)
    raise AssertionError(f"job {contact} never reached a terminal state")


# --------------------------------------------------------------------------
# simulated application

def test_app_is_deterministic():
    a = run_simulated_app(1, "atlfast", 42)
    b = run_simulated_app(1, "atlfast", 42)
    assert a == b
    assert ntuple_csv(a[0]) == ntuple_csv(b[0])


def test_app_count_conservation():
    _, summary = run_simulated_app(100, "m", 7)
    assert sum(summary.values()) == 100


def test_app_row_count_and_seed_sensitivity():
    rows, _ = run_simulated_app(25, "m", 1)
    assert len(rows) == 25
    assert run_simulated_app(25, "m", 1) != run_simulated_app(25, "m", 2)


@pytest.mark.parametrize("events,model,seed", [(1, "atlfast", 42), (100, "m", 0), (257, "pythia", -9)])
def test_app_summary_matches_rebinning_oracle(events, model, seed):
    _, summary = run_simulated_app(events, model, seed)
    assert summary == bin_counts_reference(events, model, seed)


# --------------------------------------------------------------------------
# site lifecycle

def test_start_site_answers_ping(site_factory):
    site = site_factory("pingme")
    assert wire.ping(site.jobmanager_endpoint) == "pingme"
    assert wire.ping(site.fileserver_endpoint) == "pingme"


def test_bind_error_on_occupied_port(site_factory, tmp_path):
    site = site_factory("first")
    with pytest.raises(BindError):
        start_site(SiteConfig(
            site_id="second", cpu_count=1, jobmanager_kind=JobmanagerKind.FORK,
            base_dir=str(tmp_path / "second"), listen=site.jobmanager_endpoint,
        ))


def test_submit_runs_to_done(site_factory, cred, app_bundle_uri, results_base_uri, tmp_path):
    site = site_factory("siteA")
    contact = wire.gram_submit(site.jobmanager_endpoint,
                               wrapper_request(cred, app_bundle_uri, results_base_uri))
    state, exit_code = wait_state(site.jobmanager_endpoint, contact)
    assert state is JobState.DONE and exit_code == 0
    out = tmp_path / "results" / "js-t" / "0"
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "ntuple.csv", "summary.json"]
    history = [s for _, s in site.job_history(contact)]
    assert history == [JobState.UNSUBMITTED, JobState.PENDING, JobState.ACTIVE, JobState.DONE]


def test_submit_expired_credential(site_factory, expired_cred, app_bundle_uri, results_base_uri):
    site = site_factory("siteA")
    with pytest.raises(AuthError):
        wire.gram_submit(site.jobmanager_endpoint,
                         wrapper_request(expired_cred, app_bundle_uri, results_base_uri))


def test_submit_requires_present_toolcache(site_factory, cred, app_bundle_uri, results_base_uri):
    site = site_factory("siteA")
    req = wrapper_request(cred, app_bundle_uri, results_base_uri,
                          tool={"name": "tools", "version": "1.0"})
    with pytest.raises(CacheMissing):
        wire.gram_submit(site.jobmanager_endpoint, req)
    marker = site.base_dir / "toolcache" / "tools" / "1.0" / ".checksum"
    marker.parent.mkdir(parents=True)
    marker.write_text("abc")
    contact = wire.gram_submit(site.jobmanager_endpoint, req)
    assert wait_state(site.jobmanager_endpoint, contact)[0] is JobState.DONE


def test_forced_failure_reaches_failed(site_factory, cred, app_bundle_uri, results_base_uri, tmp_path):
    site = site_factory("flaky", failure_rate=1.0)
    contact = wire.gram_submit(site.jobmanager_endpoint,
                               wrapper_request(cred, app_bundle_uri, results_base_uri))
    state, exit_code = wait_state(site.jobmanager_endpoint, contact)
    assert state is JobState.FAILED
    assert exit_code not in (0, None)
    site.wait_idle()
    # partially staged results are cleaned with the workdir
    assert not (tmp_path / "results" / "js-t" / "0").exists()
    assert not any((site.base_dir / "jobs").iterdir())


def test_missing_app_bundle_fails_job(site_factory, cred, results_base_uri):
    site = site_factory("siteA")
    req = wrapper_request(cred, "file:///nowhere/app.tar", results_base_uri)
    contact = wire.gram_submit(site.jobmanager_endpoint, req)
    assert wait_state(site.jobmanager_endpoint, contact)[0] is JobState.FAILED


def test_local_install_path_skips_bundle_fetch(site_factory, cred, results_base_uri, tmp_path):
    install = tmp_path / "opt" / "app"
    install.mkdir(parents=True)
    site = site_factory("siteA", app_install_path=str(install))
    # bundle URI is bogus, but the local install path short-circuits the fetch
    req = wrapper_request(cred, "file:///nowhere/app.tar", results_base_uri)
    contact = wire.gram_submit(site.jobmanager_endpoint, req)
    assert wait_state(site.jobmanager_endpoint, contact)[0] is JobState.DONE


def test_status_unknown_contact(site_factory):
    site = site_factory("siteA")
    with pytest.raises(UnknownContact):
        wire.gram_status(site.jobmanager_endpoint, "siteA#99999")


def test_queue_full(site_factory, cred, app_bundle_uri, results_base_uri):
    site = site_factory("tiny", cpu_count=1, kind=JobmanagerKind.FORK,
                        queue_limit=3, seconds_per_event=0.2)
    submitted = []
    with pytest.raises(QueueFull):
        for i in range(10):
            submitted.append(wire.gram_submit(
                site.jobmanager_endpoint,
                wrapper_request(cred, app_bundle_uri, results_base_uri, index=i, events=5),
            ))
    for contact in submitted:
        wire.gram_cancel(site.jobmanager_endpoint, contact)


# --------------------------------------------------------------------------
# slots

def test_slot_bound_batch(site_factory, cred, app_bundle_uri, results_base_uri):
    site = site_factory("threecpu", cpu_count=3, seconds_per_event=0.05)
    contacts = [
        wire.gram_submit(site.jobmanager_endpoint,
                         wrapper_request(cred, app_bundle_uri, results_base_uri, index=i, events=2))
        for i in range(5)
    ]
    for contact in contacts:
        assert wait_state(site.jobmanager_endpoint, contact)[0] is JobState.DONE
    assert site.max_active <= 3


def test_fork_runs_one_at_a_time(site_factory, cred, app_bundle_uri, results_base_uri):
    site = site_factory("forky", cpu_count=4, kind=JobmanagerKind.FORK, seconds_per_event=0.03)
    contacts = [
        wire.gram_submit(site.jobmanager_endpoint,
                         wrapper_request(cred, app_bundle_uri, results_base_uri, index=i, events=2))
        for i in range(4)
    ]
    for contact in contacts:
        assert wait_state(site.jobmanager_endpoint, contact)[0] is JobState.DONE
    assert site.max_active == 1


def test_fresh_submit_is_pending_then_active(site_factory, cred, app_bundle_uri, results_base_uri):
    site = site_factory("idle", cpu_count=1, kind=JobmanagerKind.FORK, seconds_per_event=0.3)
    contact = wire.gram_submit(site.jobmanager_endpoint,
                               wrapper_request(cred, app_bundle_uri, results_base_uri, events=1))
    seen = set()
    deadline = time.monotonic() + 5
    while time.monotonic() < deadline:
        state, _ = wire.gram_status(site.jobmanager_endpoint, contact)
        seen.add(state)
        if state.terminal:
            break
        time.sleep(0.005)
    assert JobState.ACTIVE in seen
    history = [s for _, s in site.job_history(contact)]
    assert history[:3] == [JobState.UNSUBMITTED, JobState.PENDING, JobState.ACTIVE]


# --------------------------------------------------------------------------
# cancel

def test_cancel_pending_job(site_factory, cred, app_bundle_uri, results_base_uri):
    site = site_factory("busy", cpu_count=1, kind=JobmanagerKind.FORK, seconds_per_event=0.5)
    first = wire.gram_submit(site.jobmanager_endpoint,
                             wrapper_request(cred, app_bundle_uri, results_base_uri, index=0, events=4))
    second = wire.gram_submit(site.jobmanager_endpoint,
                              wrapper_request(cred, app_bundle_uri, results_base_uri, index=1, events=4))
    state, _ = wire.gram_cancel(site.jobmanager_endpoint, second)
    assert state is JobState.CANCELED
    wire.gram_cancel(site.jobmanager_endpoint, first)


def test_cancel_active_job_cleans_up(site_factory, cred, app_bundle_uri, results_base_uri, tmp_path):
    site = site_factory("slow", cpu_count=1, seconds_per_event=1.0)
    contact = wire.gram_submit(site.jobmanager_endpoint,
                               wrapper_request(cred, app_bundle_uri, results_base_uri, events=10))
    deadline = time.monotonic() + 5
    while wire.gram_status(site.jobmanager_endpoint, contact)[0] is not JobState.ACTIVE:
        assert time.monotonic() < deadline
        time.sleep(0.005)
    state, _ = wire.gram_cancel(site.jobmanager_endpoint, contact)
    assert state is JobState.CANCELED
    site.wait_idle()
    assert not any((site.base_dir / "jobs").iterdir())
    assert not (tmp_path / "results" / "js-t" / "0").exists()


def test_cancel_done_job_is_idempotent_noop(site_factory, cred, app_bundle_uri, results_base_uri):
    site = site_factory("siteA")
    contact = wire.gram_submit(site.jobmanager_endpoint,
                               wrapper_request(cred, app_bundle_uri, results_base_uri))
    assert wait_state(site.jobmanager_endpoint, contact)[0] is JobState.DONE
    assert wire.gram_cancel(site.jobmanager_endpoint, contact)[0] is JobState.DONE
    assert wire.gram_cancel(site.jobmanager_endpoint, contact)[0] is JobState.DONE


def test_cancel_twice_same_result(site_factory, cred, app_bundle_uri, results_base_uri):
    site = site_factory("busy", cpu_count=1, kind=JobmanagerKind.FORK, seconds_per_event=0.5)
    blocker = wire.gram_submit(site.jobmanager_endpoint,
                               wrapper_request(cred, app_bundle_uri, results_base_uri, index=0, events=4))
    queued = wire.gram_submit(site.jobmanager_endpoint,
                              wrapper_request(cred, app_bundle_uri, results_base_uri, index=1, events=4))
    first = wire.gram_cancel(site.jobmanager_endpoint, queued)
    second = wire.gram_cancel(site.jobmanager_endpoint, queued)
    assert first == second == (JobState.CANCELED, None)
    wire.gram_cancel(site.jobmanager_endpoint, blocker)


# --------------------------------------------------------------------------
# broker

def _jdl(app_bundle_uri, results_base_uri, jobset="js-b", index=0, events=2, seed=5):
    return (
        f'Executable = "{app_bundle_uri}";\n'
        f'Arguments = "{events} atlfast {seed}";\n'
        f'InputSandbox = "";\n'
        f'OutputSandbox = "{results_base_uri}/{jobset}/{index}/";\n'
        f'Requirements = "jobset={jobset}";\n'
    )


def test_broker_accepts_wellformed_document(site_factory, app_bundle_uri, results_base_uri):
    site = site_factory("broker", cpu_count=2, kind=JobmanagerKind.BROKER)
    contact = wire.jdl_submit(site.jobmanager_endpoint, _jdl(app_bundle_uri, results_base_uri))
    assert wait_state(site.jobmanager_endpoint, contact)[0] is JobState.DONE


def test_broker_rejects_missing_executable(site_factory, app_bundle_uri, results_base_uri):
    site = site_factory("broker", kind=JobmanagerKind.BROKER)
    document = "\n".join(
        line for line in _jdl(app_bundle_uri, results_base_uri).splitlines()
        if not line.startswith("Executable")
    )
    with pytest.raises(MalformedDescription):
        wire.jdl_submit(site.jobmanager_endpoint, document)


def test_broker_rejects_garbage_lines(site_factory):
    site = site_factory("broker", kind=JobmanagerKind.BROKER)
    with pytest.raises(MalformedDescription):
        wire.jdl_submit(site.jobmanager_endpoint, "this is not a description")


def test_broker_slot_bound(site_factory, app_bundle_uri, results_base_uri):
    site = site_factory("broker", cpu_count=2, kind=JobmanagerKind.BROKER, seconds_per_event=0.05)
    contacts = [
        wire.jdl_submit(site.jobmanager_endpoint,
                        _jdl(app_bundle_uri, results_base_uri, index=i))
        for i in range(5)
    ]
    for contact in contacts:
        assert wait_state(site.jobmanager_endpoint, contact)[0] is JobState.DONE
    assert site.max_active <= 2


def test_non_broker_site_rejects_jdl(site_factory, app_bundle_uri, results_base_uri):
    site = site_factory("plain", kind=JobmanagerKind.BATCH)
    with pytest.raises(Exception):
        wire.jdl_submit(site.jobmanager_endpoint, _jdl(app_bundle_uri, results_base_uri))


# --------------------------------------------------------------------------
# histories under chaos

def test_histories_are_valid_paths_with_failures_and_cancels(
        site_factory, cred, app_bundle_uri, results_base_uri):
    import random

    site = site_factory("chaos", cpu_count=2, failure_rate=0.3, seconds_per_event=0.01)
    contacts = [
        wire.gram_submit(site.jobmanager_endpoint,
                         wrapper_request(cred, app_bundle_uri, results_base_uri, index=i, events=3))
        for i in range(12)
    ]
    rng = random.Random(1)
    for contact in rng.sample(contacts, 4):
        wire.gram_cancel(site.jobmanager_endpoint, contact)
    for contact in contacts:
        wait_state(site.jobmanager_endpoint, contact)
    site.wait_idle()
    for contact in contacts:
        history = [s for _, s in site.job_history(contact)]
        assert is_valid_path(history), history
    assert site.max_active <= 2
