"""
How the simulator prices a request
==================================

Latency in the simulator is built hop by hop. Each hop pays the link, any
injected delay, and the service's own time. Response legs also pay for
serializing the payload. This walk-through samples those pieces directly.
"""

import numpy as np

from edgechaos import SimCluster
from edgechaos.backend import ClusterProfile, Outcome, ServiceTopology
from edgechaos.faults import fault_spec_for, map_intensity

# %%
# Intensity maps to a magnitude. Delay is linear, bandwidth log-linear.
for i in (25, 50, 75, 100):
    d = map_intensity("network-delay", i).delay_ms
    bw = map_intensity("network-bandwidth", i).bandwidth_mbps
    print(f"{i:3d}%  delay {d:6.0f} ms   bandwidth {bw:6.3f} Mbps")

# %%
# Without jitter, nominal latencies are exact and easy to check by hand.
profile = ClusterProfile(worker_nodes=4, edge_nodes=1)


def latencies(topology, mode="cloud", fault=None, intensity=25, n=400, seed=0):
    sim = SimCluster(profile, mode, topology, seed=seed)
    if fault:
        sim.apply_fault(fault_spec_for(fault, intensity, deployments=topology.hops, nodes=[], seed=seed))
    out = []
    for _ in range(n):
        o = sim.send_request(topology, 10)
        if o.status is Outcome.SUCCESS:
            out.append(o.latency_ms)
        sim.wait(50)
    return np.array(out)


mono, chain = ServiceTopology.monolith(), ServiceTopology.chain(3)
for name, topo in (("monolith", mono), ("chain(3)", chain)):
    base = latencies(topo)
    hit = latencies(topo, fault="network-delay", intensity=100)
    print(f"{name:9s} baseline {base.mean():7.1f} ms   delay@100% {hit.mean():8.1f} ms  (x{hit.mean() / base.mean():.1f})")

# %%
# The edge node sits behind a slow, lossy link; spread grows accordingly.
edge = latencies(mono, mode="cloud_edge")
cloud = latencies(mono, mode="cloud")
print(f"edge  mean {edge.mean():7.1f}  sd {edge.std():6.1f}")
print(f"cloud mean {cloud.mean():7.1f}  sd {cloud.std():6.1f}")
