from __future__ import annotations

import random
import time

import pytest
from hypothesis import given, settings, strategies as st

from conftest import record_for
from oracles import brute_force_allocate, integer_power_instances
from gridgate.dispatch import (
    SubmissionPlan,
    allocate,
    plan_submission,
    render_broker_description,
    submit_plan,
    wrapper_request,
)
from gridgate.errors import EmptyPowerList, StaleActiveSet, UnknownActiveSet
from gridgate.fabric.jdl import parse_description
from gridgate.model import JobState, JobsetSpec, JobmanagerKind, parse_grid_uri


def make_spec(job_count=4, active_set="testbed", jobset_id="js-1", seed_base=7,
              events=50, app="file:///apps/app.tar", results="file:///results") -> JobsetSpec:
    return JobsetSpec(
        jobset_id=jobset_id,
        app_bundle=parse_grid_uri(app),
        input_data=(),
        results_base=parse_grid_uri(results),
        events_per_job=events,
        physics_model="atlfast",
        job_count=job_count,
        rng_seed_base=seed_base,
        active_set=active_set,
    )


# --------------------------------------------------------------------------
# allocate

def test_symmetric_split():
    assert allocate(4, [1, 1]) == [2, 2]


def test_zero_jobs():
    assert allocate(0, [5, 3, 2]) == [0, 0, 0]


def test_frozen_oracle_case_ten_over_three_one():
    # brute-force minimal-L1 oracle agrees: quotas (7.5, 2.5), tie to larger power
    assert brute_force_allocate(10, [3, 1]) == [8, 2]
    assert allocate(10, [3, 1]) == [8, 2]


def test_frozen_oracle_case_single_job_three_sites():
    # quotas (0.25, 0.25, 0.5): largest remainder picks the power-2 site
    assert brute_force_allocate(1, [1, 1, 2]) == [0, 0, 1]
    assert allocate(1, [1, 1, 2]) == [0, 0, 1]


def test_empty_power_list():
    with pytest.raises(EmptyPowerList):
        allocate(3, [])


def test_exhaustive_small_instances_match_oracle():
    for n, powers in integer_power_instances(max_n=8, max_sites=3, max_power=5):
        assert allocate(n, powers) == brute_force_allocate(n, powers), (n, powers)


@settings(max_examples=300, deadline=None)
@given(
    st.integers(0, 200),
    st.lists(st.floats(0.1, 50.0, allow_nan=False, allow_infinity=False), min_size=1, max_size=12),
)
def test_random_instances_invariants(n, powers):
    counts = allocate(n, powers)
    assert sum(counts) == n
    total = sum(powers)
    for count, power in zip(counts, powers):
        assert abs(count - n * power / total) < 1.0


def test_scale_invariance():
    rng = random.Random(3)
    for _ in range(200):
        k = rng.randint(1, 8)
        powers = [rng.randint(1, 40) for _ in range(k)]
        n = rng.randint(0, 60)
        base = allocate(n, powers)
        # integer and power-of-two scalings keep the quota rationals identical
        for scale in (2, 3, 10, 0.5):
            assert allocate(n, [p * scale for p in powers]) == base, (n, powers, scale)


def test_equal_power_permutation_symmetry():
    counts = allocate(7, [2, 2, 2])
    assert sorted(counts, reverse=True) == counts  # earlier index wins ties
    assert sum(counts) == 7


# --------------------------------------------------------------------------
# planning

def _registered_pair(registry, site_factory):
    a = site_factory("alpha", cpu_count=2)
    b = site_factory("beta", cpu_count=2)
    registry.upsert_resource(record_for(a))
    registry.upsert_resource(record_for(b))
    registry.define_active_set("testbed", ["alpha", "beta"])
    return a, b


def test_plan_partitions_indices_in_set_order(registry, site_factory):
    _registered_pair(registry, site_factory)
    plan = plan_submission(make_spec(job_count=4), registry)
    assert [a.site_id for a in plan.allocations] == ["alpha", "beta"]
    assert [a.job_indices for a in plan.allocations] == [(0, 1), (2, 3)]


def test_plan_unknown_active_set(registry):
    with pytest.raises(UnknownActiveSet):
        plan_submission(make_spec(active_set="ghost"), registry)


def test_plan_stale_active_set(registry, site_factory):
    _registered_pair(registry, site_factory)
    registry.remove_resource("beta")
    with pytest.raises(StaleActiveSet):
        plan_submission(make_spec(), registry)


def test_plan_json_roundtrip(registry, site_factory):
    _registered_pair(registry, site_factory)
    plan = plan_submission(make_spec(job_count=5), registry)
    assert SubmissionPlan.from_json(plan.to_json()).to_json() == plan.to_json()


def test_plan_uses_speed_factor(registry, site_factory):
    a = site_factory("fast", cpu_count=2)
    b = site_factory("slow", cpu_count=2)
    registry.upsert_resource(record_for(a, speed_factor=3.0))
    registry.upsert_resource(record_for(b))
    registry.define_active_set("testbed", ["fast", "slow"])
    plan = plan_submission(make_spec(job_count=8), registry)
    assert plan.counts() == {"fast": 6, "slow": 2}


# --------------------------------------------------------------------------
# broker documents

def test_render_matches_stated_format():
    spec = make_spec(seed_base=7)
    document = render_broker_description(spec, 0)
    assert 'Arguments = "50 atlfast 7";' in document.splitlines()
    assert document.splitlines()[0].startswith("Executable = ")
    keys = [line.split(" = ")[0] for line in document.strip().splitlines()]
    assert keys == ["Executable", "Arguments", "InputSandbox", "OutputSandbox", "Requirements"]


def test_render_is_deterministic():
    spec = make_spec()
    assert render_broker_description(spec, 2) == render_broker_description(spec, 2)


def test_render_parse_roundtrip():
    spec = make_spec(seed_base=100)
    document = render_broker_description(spec, 3)
    fields = parse_description(document)
    assert fields["Arguments"] == "50 atlfast 103"
    assert fields["Executable"] == str(spec.app_bundle)
    assert fields["Requirements"] == "jobset=js-1"
    assert fields["OutputSandbox"].endswith("/js-1/3/")


def test_wrapper_request_carries_per_job_values(cred):
    spec = make_spec(seed_base=11)
    req = wrapper_request(spec, 2, cred, None)
    assert req["seed"] == 13
    assert req["results_uri"].endswith("/js-1/2/")
    assert req["events"] == 50
    assert "tool" not in req


# --------------------------------------------------------------------------
# submit_plan

def _wait_submitted(records, timeout=10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if all(r.state is not JobState.UNSUBMITTED or r.submit_error for r in records):
            return
        time.sleep(0.02)
    raise AssertionError("submission workers never finished")


def test_submit_plan_all_pending(registry, site_factory, cred, app_bundle_uri, results_base_uri):
    _registered_pair(registry, site_factory)
    spec = make_spec(job_count=4, events=1, app=app_bundle_uri, results=results_base_uri)
    plan = plan_submission(spec, registry)
    records = submit_plan(plan, spec, registry, cred, wait=True)
    assert len(records) == 4
    assert all(r.contact for r in records)
    assert all(r.state in (JobState.PENDING, JobState.ACTIVE, JobState.DONE) for r in records)
    assert all(r.submit_error is None for r in records)


def test_submit_plan_partition_no_duplicates(registry, site_factory, cred,
                                             app_bundle_uri, results_base_uri):
    a, b = _registered_pair(registry, site_factory)
    spec = make_spec(job_count=7, events=1, app=app_bundle_uri, results=results_base_uri)
    plan = plan_submission(spec, registry)
    all_indices = sorted(i for alloc in plan.allocations for i in alloc.job_indices)
    assert all_indices == list(range(7))
    records = submit_plan(plan, spec, registry, cred, wait=True)
    a.wait_idle()
    b.wait_idle()
    assert len(a.contacts()) + len(b.contacts()) == 7
    assert sorted(r.job_id for r in records) == [f"js-1.{i:04d}" for i in range(7)]


def test_submit_plan_unreachable_site_isolated(registry, site_factory, cred,
                                               app_bundle_uri, results_base_uri):
    a = site_factory("alpha", cpu_count=2)
    registry.upsert_resource(record_for(a))
    registry.upsert_resource(record_for(a, site_id="ghost",
                                        jobmanager_contact="127.0.0.1:1/x",
                                        fileserver_contact="127.0.0.1:1"))
    registry.define_active_set("testbed", ["alpha", "ghost"])
    spec = make_spec(job_count=4, events=1, app=app_bundle_uri, results=results_base_uri)
    plan = plan_submission(spec, registry)
    records = submit_plan(plan, spec, registry, cred, wait=True)
    by_site: dict[str, list] = {}
    for rec in records:
        by_site.setdefault(rec.site_id, []).append(rec)
    assert all(r.state is JobState.PENDING or r.state.terminal for r in by_site["alpha"])
    assert all(r.submit_error for r in by_site["ghost"])
    assert all(r.state is JobState.UNSUBMITTED for r in by_site["ghost"])


def test_submit_plan_deploys_toolcache_once(registry, site_factory, cred,
                                            app_bundle_uri, results_base_uri, tmp_path):
    from gridgate.fnv import fnv1a_hex
    from gridgate.staging import ToolBundle

    site = site_factory("alpha", cpu_count=2)
    registry.upsert_resource(record_for(site))
    registry.define_active_set("testbed", ["alpha"])
    payload = b"tool payload"
    tool_path = tmp_path / "tool.bin"
    tool_path.write_bytes(payload)
    tool = ToolBundle("grappa-tools", "1.0", parse_grid_uri(f"file://{tool_path}"), fnv1a_hex(payload))

    spec = make_spec(job_count=3, events=1, app=app_bundle_uri, results=results_base_uri)
    plan = plan_submission(spec, registry)
    submit_plan(plan, spec, registry, cred, tool=tool, wait=True)
    spec2 = make_spec(job_count=3, jobset_id="js-2", events=1,
                      app=app_bundle_uri, results=results_base_uri)
    plan2 = plan_submission(spec2, registry)
    submit_plan(plan2, spec2, registry, cred, tool=tool, wait=True)
    payload_puts = [p for p in site.fileserver.put_log if "toolcache" in p and p.endswith("payload.bin")]
    assert len(payload_puts) == 1
    site.wait_idle()


def test_submit_plan_routes_broker_sites_through_descriptions(
        registry, site_factory, cred, app_bundle_uri, results_base_uri):
    broker = site_factory("broker", cpu_count=2, kind=JobmanagerKind.BROKER)
    registry.upsert_resource(record_for(broker))
    registry.define_active_set("testbed", ["broker"])
    spec = make_spec(job_count=3, events=1, app=app_bundle_uri, results=results_base_uri)
    plan = plan_submission(spec, registry)
    records = submit_plan(plan, spec, registry, cred, wait=True)
    assert all(r.contact for r in records)
    broker.wait_idle()
    assert len(broker.contacts()) == 3
