"""Acceptance criteria, one test each, at the stated tolerances and time limits.

Every test reports a PASS/FAIL line through the ``verdict`` fixture and the
terminal summary lists them together.
"""

import csv
import json
import math
import random
import time
from collections import defaultdict

import numpy as np
import pytest

from conftest import small_plan
from edgechaos.backend import EDGE_LINK, SimCluster
from edgechaos.faults import map_intensity, select_targets
from edgechaos.health import HealthPolicy
from edgechaos.metrics import (
    Baseline,
    check_bandwidth_volatility,
    check_delay_amplification,
    check_loss_survivorship,
    check_partition_stability,
    p95_nearest_rank,
)
from edgechaos.config import expand_campaign
from edgechaos.orchestrator import PHASES, run_campaign, run_experiment
from edgechaos.outputs import load_run

# Shared settings for the directional pattern campaigns.
PATTERN = dict(intensities=[25, 50, 75, 100], thread_counts=[4], timeouts_s=[10], window_s=60, seed=11, stabilization_s=5)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.s = time.perf_counter() - self.t0

    def within(self, limit):
        return self.s < limit, f"{self.s:.3f}s < {limit}s"


class Probe(SimCluster):
    """Records the active fault count whenever cluster health is read."""

    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        self.active_at_health = []

    def node_statuses(self):
        self.active_at_health.append(len(self.active_fault_schedules()))
        return super().node_statuses()


def probe_for(plan):
    return Probe(plan.profile(), plan.deployment_mode, plan.service_topology(), seed=plan.seed)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def events_by_case(path):
    out, current = defaultdict(list), None
    for line in path.read_text().splitlines():
        ev = json.loads(line)
        if ev["phase"] == "P1" and ev["event"] == "phase_start":
            current = ev["detail"]["case_id"]
        out[current].append(ev)
    return out


def test_intensity_mapping_exactness(verdict):
    with Timer() as t:
        exact = [
            map_intensity("network-delay", 25).delay_ms == 100.0,
            map_intensity("network-delay", 100).delay_ms == 1000.0,
            map_intensity("network-bandwidth", 25).bandwidth_mbps == 10.0,
            map_intensity("network-bandwidth", 100).bandwidth_mbps == 1.0,
        ]
        errs = [
            abs(map_intensity("network-delay", i).delay_ms - (100 + (i - 25) / 75 * 900)) for i in (50, 75)
        ] + [
            abs(map_intensity("network-bandwidth", i).bandwidth_mbps - 10 * 10 ** (-(i - 25) / 75)) for i in (50, 75)
        ]  # fmt: skip
        bw50 = map_intensity("network-bandwidth", 50).bandwidth_mbps
    fast, timing = t.within(1)
    ok = all(exact) and max(errs) <= 1e-3 and abs(bw50 - 4.642) <= 1e-3 and fast
    assert verdict("1 intensity mapping", ok, f"endpoints exact={all(exact)} max interp err={max(errs):.2e} {timing}")


def test_zscore_self_normalization(verdict):
    rng = np.random.default_rng(2024)
    worst_mu = worst_sd = 0.0
    with Timer() as t:
        for _ in range(1000):
            x = rng.lognormal(4.0, rng.uniform(0.1, 1.5), size=rng.integers(2, 200))
            b = Baseline.from_latencies(x)
            z = b.z_array(x)
            worst_mu = max(worst_mu, abs(z.mean()))
            worst_sd = max(worst_sd, abs(z.std() - 1.0))
            assert b.z(b.mu) == 0.0
    fast, timing = t.within(1)
    ok = worst_mu <= 1e-9 and worst_sd <= 1e-9 and fast
    assert verdict("2 z-score normalization", ok, f"|mean|<={worst_mu:.1e} |sd-1|<={worst_sd:.1e} {timing}")


def test_p95_matches_sort_oracle(verdict):
    rng = random.Random(95)
    mismatches = 0
    with Timer() as t:
        for _ in range(500):
            xs = [rng.expovariate(1 / 80) for _ in range(rng.randint(1, 1000))]
            oracle = sorted(xs)[math.ceil(0.95 * len(xs)) - 1]
            mismatches += p95_nearest_rank(xs) != oracle
    fast, timing = t.within(5)
    assert verdict("3 p95 oracle", mismatches == 0 and fast, f"{mismatches}/500 mismatches {timing}")


def test_targeting_law(verdict):
    bad = []
    with Timer() as t:
        for n in range(1, 51):
            pool = [f"e{i}" for i in range(n)]
            for p in (25, 50, 75, 100):
                got = select_targets(pool, "fixed-percent", p, seed=n * 100 + p)
                if len(got) != math.ceil(p * n / 100) or not set(got) <= set(pool):
                    bad.append((n, p))
        five = len(select_targets([f"svc-{i}" for i in range(5)], "fixed-percent", 75, seed=0))
    fast, timing = t.within(1)
    assert verdict("4 targeting law", not bad and five == 4 and fast, f"violations={bad} 5@75%->{five} {timing}")


@pytest.fixture(scope="module")
def twelve_case_run(tmp_path_factory):
    plan = small_plan(
        name="phases",
        fault_types=["network-delay", "network-loss", "cpu-stress"],
        intensities=[25, 50, 75, 100],
        topology="chain(2)",
        thread_counts=[2],
        window_s=10,
    )
    probes = []

    def factory():
        probes.append(probe_for(plan))
        return probes[-1]

    out = tmp_path_factory.mktemp("phases")
    t0 = time.perf_counter()
    campaign = run_campaign(plan, factory, out)
    return plan, campaign, out, probes[0], time.perf_counter() - t0


def test_five_phase_ordering(verdict, twelve_case_run):
    plan, campaign, out, probe, elapsed = twelve_case_run
    events = events_by_case(out / "events.log")
    sends = defaultdict(list)
    for row in read_csv(out / "requests.csv"):
        sends[row["experiment_id"]].append(float(row["send_ts_ms"]))
    problems = []
    for r in campaign.results:
        evs = events[r.case_id]
        idx = [PHASES.index(e["phase"]) for e in evs]
        if not r.completed or idx != sorted(idx) or sorted(set(idx)) != [0, 1, 2, 3, 4]:
            problems.append(f"{r.case_id}: order")
        on = next(e["detail"]["fault_on_ts_ms"] for e in evs if e["phase"] == "P2" and e["event"] == "phase_end")
        if not sends[r.case_id] or on > min(sends[r.case_id]):
            problems.append(f"{r.case_id}: fault_on after first send")
    # Health is read at P1 and at the end of P5; faults must be gone by then.
    leftovers = sum(probe.active_at_health) + len(probe.active_fault_schedules())
    n = len(campaign.results)
    ok = n == 12 and not problems and leftovers == 0 and elapsed < 30
    detail = f"{n} cases, problems={problems or 'none'}, leftover schedules={leftovers}, {elapsed:.2f}s < 30s"
    assert verdict("5 five-phase ordering", ok, detail)


def test_determinism(verdict, tmp_path):
    plan = small_plan(
        name="det", fault_types=["network-delay", "network-loss"], intensities=[25, 50, 75, 100],
        topology="chain(3)", thread_counts=[4], window_s=20, seed=123456789,
    )  # fmt: skip
    with Timer() as t:
        for name in ("a", "b"):
            run_campaign(plan, lambda: SimCluster(plan.profile(), plan.deployment_mode, plan.service_topology(), seed=plan.seed), tmp_path / name)
    files = ("requests.csv", "summary.csv", "zscores.csv")
    same = {f: (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files}
    fast, timing = t.within(60)
    assert verdict("6 determinism", all(same.values()) and fast, f"{same} {timing}")


def test_conservation(verdict, twelve_case_run, tmp_path):
    _, campaign, out, _, _ = twelve_case_run
    rows = defaultdict(int)
    for row in read_csv(out / "requests.csv"):
        rows[row["experiment_id"]] += 1
    lost = {
        r.case_id: (r.planned_arrivals, rows[r.case_id])
        for r in campaign.results
        if r.case.workload.mode.open_loop and r.planned_arrivals != rows[r.case_id]
    }
    checked = sum(r.case.workload.mode.open_loop for r in campaign.results)

    loss = small_plan(name="blackhole", fault_types=["network-loss"], intensities=[100], thread_counts=[4], window_s=10)
    lc = run_campaign(loss, lambda: probe_for(loss), tmp_path / "loss")
    (lr,) = lc.results
    loss_rows = read_csv(tmp_path / "loss" / "requests.csv")
    black = len(loss_rows) == lr.planned_arrivals > 0 and all(r["outcome"] != "success" for r in loss_rows)
    ok = checked == 12 and not lost and black
    detail = f"open-loop cases checked={checked} mismatches={lost or 'none'}; 100% loss {len(loss_rows)}/{lr.planned_arrivals} recorded"
    assert verdict("7 conservation", ok, detail)


def pattern_run(tmp_path, name, **kw):
    plan = small_plan(name=name, **{**PATTERN, **kw})
    run_campaign(plan, lambda: SimCluster(plan.profile(), plan.deployment_mode, plan.service_topology(), seed=plan.seed), tmp_path / name)
    cases = load_run(tmp_path / name)
    return [c.data for c in cases], sum(int(c.row["total"]) for c in cases)


def test_pattern_delay_amplification(verdict, tmp_path):
    with Timer() as t:
        chain, n1 = pattern_run(tmp_path, "cloud-chain", fault_types=["network-delay"], topology="chain(2)")
        mono, n2 = pattern_run(tmp_path, "edge-mono", fault_types=["network-delay"], deployment_mode="cloud_edge")
        check = check_delay_amplification(chain, mono)
    fast, timing = t.within(60)
    ok = check.passed is True and min(n1, n2) >= 2000 and fast
    assert verdict("8a delay amplification", ok, f"{check.detail}; requests {n1}/{n2} {timing}")


def test_pattern_bandwidth_volatility(verdict, tmp_path):
    with Timer() as t:
        edge, n1 = pattern_run(tmp_path, "edge", fault_types=["network-bandwidth"], deployment_mode="cloud_edge")
        cloud, n2 = pattern_run(tmp_path, "cloud", fault_types=["network-bandwidth"])
        check = check_bandwidth_volatility(edge, cloud)
    fast, timing = t.within(60)
    ok = check.passed is True and min(n1, n2) >= 2000 and fast
    assert verdict("8b bandwidth volatility", ok, f"{check.detail}; requests {n1}/{n2} {timing}")


def test_pattern_loss_survivorship(verdict, tmp_path):
    loss = {"action": "network-loss", "duration_s": 3, "trigger_every_s": 6}
    with Timer() as t:
        cases, n = pattern_run(tmp_path, "loss", fault_types=[loss])
        check = check_loss_survivorship(cases)
    fast, timing = t.within(60)
    ok = check.passed is True and n >= 2000 and fast
    assert verdict("8c loss survivorship", ok, f"{check.detail}; requests {n} {timing}")


def test_pattern_partition_stability(verdict, tmp_path):
    with Timer() as t:
        cases, n = pattern_run(tmp_path, "partition", fault_types=["network-partition"], deployment_mode="cloud_edge")
        check = check_partition_stability(cases)
    fast, timing = t.within(60)
    ok = check.passed is True and n >= 2000 and fast
    assert verdict("8d partition stability", ok, f"{check.detail}; requests {n} {timing}")


def test_health_gating(verdict):
    plan = small_plan(name="gate")
    case = expand_campaign(plan)[0]
    policy = HealthPolicy()
    with Timer() as t:
        sim = probe_for(plan)
        sim.set_node_ready(sim.node_statuses()[0].name, False)
        sim.active_at_health.clear()
        r = run_experiment(case, sim, plan.retries, health=policy)
    checks = sum(e.event == "health_check" for e in r.phase_log)
    applied = sum(e.phase != "P1" for e in r.phase_log) + len(sim.active_fault_schedules())
    fast, timing = t.within(5)
    ok = r.reason == "unhealthy-precondition" and checks == policy.max_attempts and applied == 0 and fast
    detail = f"status={r.status_label} checks={checks}/{policy.max_attempts} post-P1 events+faults={applied} {timing}"
    assert verdict("9 health gating", ok, detail)


def test_edge_link_bounds(verdict):
    rng = random.Random(10_000)
    with Timer() as t:
        lat = [EDGE_LINK.sample_latency(rng) for _ in range(10_000)]
        drops = sum(EDGE_LINK.sample_drop(rng) for _ in range(10_000)) / 10_000
    fast, timing = t.within(5)
    ok = min(lat) >= 180 and max(lat) <= 220 and abs(drops - 0.10) <= 0.01 and fast
    assert verdict("10 edge link bounds", ok, f"latency [{min(lat):.1f}, {max(lat):.1f}] drop={drops:.4f} {timing}")
