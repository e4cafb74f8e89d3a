"""
Directional resilience patterns
===============================

Four small campaigns, each paired with the configuration it is compared
against. Numbers are z-scores against each group's 25% baseline, so they
read as "baseline standard deviations away from normal".
"""

import tempfile
from pathlib import Path

from edgechaos import SimCluster, parse_plan, run_campaign
from edgechaos.metrics import (
    check_bandwidth_volatility,
    check_delay_amplification,
    check_loss_survivorship,
    check_partition_stability,
)
from edgechaos.outputs import load_run

root = Path(tempfile.mkdtemp(prefix="edgechaos-patterns-"))

COMMON = """
intensities: [25, 50, 75, 100]
thread_counts: [4]
timeouts_s: [10]
window_s: 60
stabilization_s: 5
seed: 11
"""


def campaign(name, extra):
    plan = parse_plan(f"name: {name}\n{extra}{COMMON}")
    run_campaign(
        plan,
        lambda: SimCluster(plan.profile(), plan.deployment_mode, plan.service_topology(), seed=plan.seed),
        root / name,
    )
    return [c.data for c in load_run(root / name)]


def show(check):
    label = {True: "PASS", False: "FAIL", None: "UNDECIDED"}[check.passed]
    print(f"{label:9s} {check.name}\n          {check.detail}\n")


# %%
# Delay: every hop pays the injected delay twice, so a chain amplifies it.
# At the edge the 200 ms link already dominates, which flattens z.
show(check_delay_amplification(
    campaign("delay-cloud-chain", "fault_types: [network-delay]\ntopology: chain(2)\n"),
    campaign("delay-edge-mono", "fault_types: [network-delay]\ndeployment_mode: cloud_edge\n"),
))

# %%
# Bandwidth: a 256 KB response over a throttled, lossy edge link swings
# far more than the same throttle inside the cloud.
show(check_bandwidth_volatility(
    campaign("bw-edge", "fault_types: [network-bandwidth]\ndeployment_mode: cloud_edge\n"),
    campaign("bw-cloud", "fault_types: [network-bandwidth]\n"),
))

# %%
# Loss: at 100% only requests sent between activation windows get through,
# so the success-only mean falls below the 75% one.
show(check_loss_survivorship(
    campaign("loss", "fault_types: [{action: network-loss, duration_s: 3, trigger_every_s: 6}]\n"),
))

# %%
# Partition at the edge. On cluster-4 the scheduler places every app pod on
# the single edge node, so no request path crosses a cut and z stays flat.
show(check_partition_stability(
    campaign("part-edge", "fault_types: [network-partition]\ndeployment_mode: cloud_edge\n"),
))

# %%
# Spread the chain across a larger cluster and the same fault severs it:
# requests time out and the check has nothing to measure.
show(check_partition_stability(
    campaign("part-spread", "fault_types: [network-partition]\ndeployment_mode: cloud_edge\n"
             "cluster_profile: cluster-8\ntopology: chain(3)\n"),
))
print("runs written under", root)
