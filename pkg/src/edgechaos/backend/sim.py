"""Deterministic discrete-event model of a cloud or cloud-edge cluster.

Time is virtual. Nothing happens between calls except through the event
queue, so a given seed and sequence of calls always yields the same event log
and the same request outcomes.

Request path model (per hop of the topology)::

    caller --request--> pod   service time   pod --response(payload)--> caller

Each crossing costs a link latency sample plus any injected delay; response
crossings also serialize a fixed payload through the narrowest bandwidth
cap. A dropped crossing costs serialization + retransmission timeout and is
sent once more; a second drop fails the request as a timeout.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import random
import threading
from dataclasses import dataclass, field
from typing import Any

from edgechaos.backend.base import (
    Backend,
    ClusterProfile,
    DeploymentMode,
    DeploymentSpec,
    LinkProfile,
    NodeStatus,
    Outcome,
    PodStatus,
    RequestOutcome,
    ServiceTopology,
    default_deployments,
    serialization_ms,
)
from edgechaos.errors import CapacityError, UnknownNamespaceError, UnknownTargetError
from edgechaos.faults import FaultAction, FaultHandle, FaultSpec

logger = logging.getLogger(__name__)

PAYLOAD_BYTES = 256 * 1024
RETRANSMIT_TIMEOUT_MS = 200.0
DELAY_JITTER_FRACTION = 0.1
NODE_KILL_RESCHEDULE_MS = 15000.0

RUNNING = "Running"
RESTARTING = "Restarting"
RESCHEDULING = "Rescheduling"
GONE = "Gone"


@dataclass
class NodeState:
    name: str
    is_edge: bool
    link: LinkProfile
    ready: bool = True


@dataclass
class PodState:
    name: str
    deployment: str
    namespace: str
    node: str | None
    total: int
    ready: int
    phase: str = RUNNING
    generation: int = 0

    @property
    def ready_fraction(self) -> str:
        return f"{self.ready}/{self.total}"


@dataclass
class Overlay:
    handle: FaultHandle
    deployments: frozenset[str]
    nodes: frozenset[str]

    @property
    def action(self) -> FaultAction:
        return self.handle.spec.action


@dataclass
class ClusterState:
    profile: ClusterProfile
    mode: DeploymentMode
    seed: int
    nodes: dict[str, NodeState]
    deployments: dict[str, DeploymentSpec]
    pods: dict[str, PodState] = field(default_factory=dict)
    active_fault_overlays: dict[str, Overlay] = field(default_factory=dict)
    partition_sets: list[frozenset[str]] | None = None
    virtual_clock_ms: float = 0.0
    event_log: list[tuple[float, str, dict[str, Any]]] = field(default_factory=list)
    _queue: list[tuple[float, int, str, dict[str, Any]]] = field(default_factory=list)
    _seq: itertools.count = field(default_factory=itertools.count)
    _fault_ids: itertools.count = field(default_factory=lambda: itertools.count(1))

    def schedule(self, t_ms: float, kind: str, **payload: Any) -> None:
        heapq.heappush(self._queue, (t_ms, next(self._seq), kind, payload))

    def log(self, kind: str, **detail: Any) -> None:
        self.event_log.append((self.virtual_clock_ms, kind, detail))

    def pods_of(self, deployment: str) -> list[PodState]:
        return [p for p in self.pods.values() if p.deployment == deployment]


def build_cluster(profile: ClusterProfile, mode: DeploymentMode | str, seed: int = 0) -> ClusterState:
    """Fresh cluster with every node Ready and every pod Running."""
    mode = DeploymentMode(mode)
    names = profile.node_names(mode)
    nodes = {
        n: NodeState(n, n.startswith("edge-"), profile.edge_link if n.startswith("edge-") else profile.cloud_link)
        for n in names
    }
    total = sum(d.replicas for d in profile.deployments)
    capacity = len(nodes) * profile.max_pods_per_node
    if total > capacity:
        raise CapacityError(f"{total} replicas exceed capacity of {capacity} pods")
    for d in profile.deployments:
        if d.namespace not in profile.namespaces:
            raise UnknownNamespaceError(d.namespace)
    state = ClusterState(
        profile=profile,
        mode=mode,
        seed=seed,
        nodes=nodes,
        deployments={d.name: d for d in profile.deployments},
    )
    for d in profile.deployments:
        for i in range(d.replicas):
            pod = PodState(f"{d.name}-{i}", d.name, d.namespace, None, d.containers, d.containers)
            pod.node = _place(state)
            state.pods[pod.name] = pod
    state.log("cluster_built", nodes=len(nodes), pods=len(state.pods), mode=mode.value)
    return state


def _place(state: ClusterState) -> str | None:
    """Least-loaded ready node; cloud-edge mode keeps app pods on edge nodes while they fit."""
    load = {n: 0 for n in state.nodes}
    for p in state.pods.values():
        if p.node is not None:
            load[p.node] += 1
    ready = [n for n, s in state.nodes.items() if s.ready and load[n] < state.profile.max_pods_per_node]
    if state.mode is DeploymentMode.CLOUD_EDGE:
        edge = [n for n in ready if state.nodes[n].is_edge]
        ready = edge or ready
    if not ready:
        return None
    return min(ready, key=lambda n: load[n])  # min is stable: ties go to the first node


def step_until(state: ClusterState, t_ms: float) -> list[tuple[float, str, dict[str, Any]]]:
    """Apply queued events with timestamp <= t_ms in (time, insertion) order."""
    if t_ms < state.virtual_clock_ms:
        raise ValueError(f"cannot step back from {state.virtual_clock_ms} to {t_ms}")
    processed = []
    while state._queue and state._queue[0][0] <= t_ms:
        ts, _, kind, payload = heapq.heappop(state._queue)
        state.virtual_clock_ms = ts
        if _handle_event(state, kind, payload):
            entry = (ts, kind, dict(payload))
            state.event_log.append(entry)
            processed.append(entry)
    state.virtual_clock_ms = t_ms
    return processed


def _handle_event(state: ClusterState, kind: str, payload: dict[str, Any]) -> bool:
    """Returns False for stale events superseded by a later pod transition."""
    pod = state.pods.get(payload.get("pod", ""))
    if pod is None or pod.generation != payload["generation"]:
        return False
    if kind == "pod_ready":
        pod.phase = RUNNING
        pod.ready = pod.total
    elif kind == "pod_rescheduled":
        node = _place(state)
        if node is None:
            pod.phase = GONE
            pod.node = None
        else:
            pod.node = node
            pod.phase = RUNNING
            pod.ready = pod.total
    return True


def _refresh_partitions(state: ClusterState) -> None:
    """Each partition overlay isolates its target nodes; overlapping ones refine each other."""
    overlays = [o for o in state.active_fault_overlays.values() if o.action is FaultAction.NETWORK_PARTITION]
    if not overlays:
        state.partition_sets = None
        return
    groups: dict[tuple, set[str]] = {}
    for n in state.nodes:
        key = tuple(n if n in o.nodes else "" for o in overlays)
        groups.setdefault(key, set()).add(n)
    state.partition_sets = sorted((frozenset(g) for g in groups.values()), key=lambda g: sorted(g))


def _disrupt_pod(state: ClusterState, pod: PodState, phase: str, delay_ms: float, event: str) -> None:
    pod.generation += 1
    pod.phase = phase
    state.schedule(state.virtual_clock_ms + delay_ms, event, pod=pod.name, generation=pod.generation)


def apply_overlay(state: ClusterState, spec: FaultSpec) -> FaultHandle:
    action = spec.action
    known = state.nodes if action.targets_nodes else state.deployments
    for t in spec.targets:
        if t not in known:
            raise UnknownTargetError(t)
    handle = FaultHandle(f"fault-{next(state._fault_ids):04d}", spec, state.virtual_clock_ms)
    targets = frozenset(spec.targets)
    overlay = Overlay(
        handle,
        deployments=frozenset() if action.targets_nodes else targets,
        nodes=targets if action.targets_nodes else frozenset(),
    )
    state.active_fault_overlays[handle.id] = overlay
    now = state.virtual_clock_ms

    if action is FaultAction.CONTAINER_KILL:
        for name in sorted(targets):
            for pod in state.pods_of(name):
                if pod.phase in (RUNNING, RESTARTING):
                    pod.ready = max(0, pod.ready - 1) if pod.phase == RUNNING else pod.ready
                    _disrupt_pod(state, pod, RESTARTING, state.deployments[name].restart_delay_ms, "pod_ready")
    elif action is FaultAction.POD_KILL:
        for name in sorted(targets):
            for pod in state.pods_of(name):
                pod.ready = 0
                pod.node = None
                _disrupt_pod(state, pod, RESCHEDULING, state.deployments[name].reschedule_delay_ms, "pod_rescheduled")
    elif action is FaultAction.NODE_KILL:
        for n in sorted(targets):
            state.nodes[n].ready = False
        for pod in sorted(state.pods.values(), key=lambda p: p.name):
            if pod.node in targets:
                pod.ready = 0
                pod.node = None
                _disrupt_pod(state, pod, RESCHEDULING, NODE_KILL_RESCHEDULE_MS, "pod_rescheduled")
    elif action is FaultAction.NETWORK_PARTITION:
        _refresh_partitions(state)

    state.log("fault_applied", id=handle.id, action=action.value, targets=sorted(targets), at=now)
    return handle


def remove_overlay(state: ClusterState, handle_id: str) -> bool:
    overlay = state.active_fault_overlays.pop(handle_id, None)
    if overlay is None:
        return False
    if overlay.action is FaultAction.NODE_KILL:
        still_down = set()
        for o in state.active_fault_overlays.values():
            if o.action is FaultAction.NODE_KILL:
                still_down |= o.nodes
        for n in sorted(overlay.nodes - still_down):
            state.nodes[n].ready = True
        for pod in sorted(state.pods.values(), key=lambda p: p.name):
            if pod.phase == GONE:
                delay = state.deployments[pod.deployment].reschedule_delay_ms
                _disrupt_pod(state, pod, RESCHEDULING, delay, "pod_rescheduled")
    elif overlay.action is FaultAction.NETWORK_PARTITION:
        _refresh_partitions(state)
    state.log("fault_removed", id=handle_id)
    return True


def restart_namespace(state: ClusterState, namespace: str) -> list[str]:
    """Rolling restart of every deployment in ``namespace``, all in parallel."""
    if namespace not in state.profile.namespaces:
        raise UnknownNamespaceError(namespace)
    names = sorted(d.name for d in state.deployments.values() if d.namespace == namespace)
    for name in names:
        spec = state.deployments[name]
        for pod in sorted(state.pods_of(name), key=lambda p: p.name):
            if pod.node is None or not state.nodes[pod.node].ready:
                pod.node = None
                pod.node = _place(state)
            pod.ready = 0
            if pod.node is None:
                pod.generation += 1
                pod.phase = GONE
                continue
            _disrupt_pod(state, pod, RESTARTING, spec.restart_delay_ms, "pod_ready")
    state.log("deployments_restarted", namespace=namespace, deployments=names)
    return names


# -- request routing ---------------------------------------------------------


@dataclass
class _Effects:
    delay_ms: float = 0.0
    drop_prob: float = 0.0
    bandwidth_mbps: float | None = None


def _effects(state: ClusterState, deployments: tuple[str, ...]) -> _Effects:
    eff = _Effects()
    keep = 1.0
    for o in state.active_fault_overlays.values():
        if not o.deployments.intersection(deployments):
            continue
        m = o.handle.spec.magnitude
        if m.delay_ms is not None:
            eff.delay_ms += m.delay_ms
        elif m.drop_prob is not None:
            keep *= 1.0 - m.drop_prob
        elif m.bandwidth_mbps is not None:
            eff.bandwidth_mbps = m.bandwidth_mbps if eff.bandwidth_mbps is None else min(eff.bandwidth_mbps, m.bandwidth_mbps)
    eff.drop_prob = 1.0 - keep
    return eff


def _cpu_factor(state: ClusterState, deployment: str) -> float:
    f = 1.0
    for o in state.active_fault_overlays.values():
        if deployment in o.deployments and o.handle.spec.magnitude.cpu_factor is not None:
            f = max(f, o.handle.spec.magnitude.cpu_factor)
    return f


def _link_between(state: ClusterState, a: str | None, b: str) -> LinkProfile | None:
    """Client traffic uses the pod node's access link; same-node traffic is loopback (None)."""
    if a is None:
        return state.nodes[b].link
    if a == b:
        return None
    na, nb = state.nodes[a], state.nodes[b]
    return state.profile.edge_link if (na.is_edge or nb.is_edge) else state.profile.cloud_link


def _partitioned(state: ClusterState, a: str | None, b: str) -> bool:
    if state.partition_sets is None or a is None or a == b:
        return False
    return not any(a in g and b in g for g in state.partition_sets)


def _cross(
    link: LinkProfile | None,
    eff: _Effects,
    payload_bytes: int,
    rng: random.Random,
    jitter: float,
) -> tuple[float, bool]:
    """Time spent on one crossing and whether it was eventually delivered."""
    bw = eff.bandwidth_mbps
    if link is not None and link.bandwidth_mbps is not None:
        bw = link.bandwidth_mbps if bw is None else min(bw, link.bandwidth_mbps)
    ser = serialization_ms(payload_bytes, bw)
    p_drop = eff.drop_prob
    if link is not None and link.drop_prob > 0:
        p_drop = 1.0 - (1.0 - p_drop) * (1.0 - link.drop_prob)

    spent = 0.0
    for attempt in range(2):
        if p_drop > 0 and rng.random() < p_drop:
            spent += ser + RETRANSMIT_TIMEOUT_MS
            continue
        t = ser
        if link is not None:
            t += link.sample_latency(rng)
        if eff.delay_ms:
            t += eff.delay_ms * (1.0 + rng.uniform(-jitter, jitter)) if jitter else eff.delay_ms
        return spent + t, True
    return spent, False


def _pick_endpoint(state: ClusterState, deployment: str, rng: random.Random) -> PodState | None:
    pods = sorted(state.pods_of(deployment), key=lambda p: p.name)
    live = [p for p in pods if p.phase == RUNNING and p.node is not None and state.nodes[p.node].ready]
    if not live:
        return None
    return live[0] if len(live) == 1 else rng.choice(live)


def route_request(
    state: ClusterState,
    topology: ServiceTopology,
    timeout_s: float,
    rng: random.Random,
    delay_jitter_fraction: float = DELAY_JITTER_FRACTION,
) -> RequestOutcome:
    """Outcome of one request issued at the current virtual time."""
    budget = timeout_s * 1000.0

    def timed_out(hop: str) -> RequestOutcome:
        return RequestOutcome(Outcome.TIMEOUT, elapsed_ms=budget, failing_hop=hop)

    elapsed = 0.0
    caller: PodState | None = None
    path: list[tuple[PodState | None, PodState]] = []
    for i, dep in enumerate(topology.hops):
        if dep not in state.deployments:
            raise UnknownTargetError(dep)
        pod = _pick_endpoint(state, dep, rng)
        src = caller.node if caller else None
        if pod is None:
            # refused: one round trip on the link the call would have used
            node = next((p.node for p in sorted(state.pods_of(dep), key=lambda p: p.name) if p.node), None)
            if node is not None:
                link = _link_between(state, src, node)
            else:
                link = state.nodes[src].link if src else state.profile.cloud_link
            rtt = 2 * link.sample_latency(rng) if link else 0.0
            back = sum(_return_latency(state, a, b, rng) for a, b in path)
            status = Outcome.CONNECTION_ERROR if i == 0 else Outcome.SERVER_ERROR
            return RequestOutcome(status, elapsed_ms=min(budget, max(1.0, elapsed + rtt + back)), failing_hop=dep)
        if _partitioned(state, src, pod.node):
            return timed_out(dep)
        touched = (dep,) if caller is None else (caller.deployment, dep)
        t, ok = _cross(_link_between(state, src, pod.node), _effects(state, touched), 0, rng, delay_jitter_fraction)
        elapsed += t
        if not ok or elapsed > budget:
            return timed_out(dep)
        elapsed += _service_time(state, pod, rng)
        if elapsed > budget:
            return timed_out(dep)
        path.append((caller, pod))
        caller = pod

    for upstream, pod in reversed(path):
        src = upstream.node if upstream else None
        touched = (pod.deployment,) if upstream is None else (upstream.deployment, pod.deployment)
        t, ok = _cross(_link_between(state, src, pod.node), _effects(state, touched), PAYLOAD_BYTES, rng, delay_jitter_fraction)
        elapsed += t
        if not ok or elapsed > budget:
            return timed_out(pod.deployment)
    return RequestOutcome(Outcome.SUCCESS, elapsed_ms=elapsed, latency_ms=elapsed)


def _service_time(state: ClusterState, pod: PodState, rng: random.Random) -> float:
    spec = state.deployments[pod.deployment]
    t = spec.base_service_time_ms
    if spec.service_jitter_fraction:
        t *= 1.0 + rng.uniform(-spec.service_jitter_fraction, spec.service_jitter_fraction)
    return t * _cpu_factor(state, pod.deployment)


def _return_latency(state: ClusterState, upstream: PodState | None, pod: PodState, rng: random.Random) -> float:
    link = _link_between(state, upstream.node if upstream else None, pod.node)
    return link.sample_latency(rng) if link else 0.0


class SimCluster(Backend):
    """Backend over a :class:`ClusterState`; calls are serialized by a lock."""

    def __init__(
        self,
        profile: ClusterProfile,
        mode: DeploymentMode | str = DeploymentMode.CLOUD,
        topology: ServiceTopology | None = None,
        seed: int = 0,
        delay_jitter_fraction: float = DELAY_JITTER_FRACTION,
    ):
        if not profile.deployments:
            if topology is None:
                raise ValueError("profile has no deployments and no topology was given")
            profile = profile.with_deployments(default_deployments(topology))
        self.state = build_cluster(profile, mode, seed)
        self.topology = topology
        self.rng = random.Random(seed)
        self.delay_jitter_fraction = delay_jitter_fraction
        self._lock = threading.RLock()

    @property
    def event_log(self) -> list[tuple[float, str, dict[str, Any]]]:
        return self.state.event_log

    def reseed(self, seed: int) -> None:
        with self._lock:
            self.rng = random.Random(seed)

    def now_ms(self) -> float:
        return self.state.virtual_clock_ms

    def wait(self, ms: float) -> None:
        with self._lock:
            step_until(self.state, self.state.virtual_clock_ms + max(0.0, ms))

    def step_until(self, t_ms: float) -> list[tuple[float, str, dict[str, Any]]]:
        with self._lock:
            return step_until(self.state, t_ms)

    def node_statuses(self) -> list[NodeStatus]:
        with self._lock:
            return [NodeStatus(n.name, n.ready, n.is_edge) for n in self.state.nodes.values()]

    def pod_statuses(self, namespace: str) -> list[PodStatus]:
        with self._lock:
            if namespace not in self.state.profile.namespaces:
                raise UnknownNamespaceError(namespace)
            return [
                PodStatus(p.name, p.deployment, p.node, p.phase, p.ready_fraction)
                for p in sorted(self.state.pods.values(), key=lambda p: p.name)
                if p.namespace == namespace
            ]

    def active_fault_schedules(self) -> list[FaultHandle]:
        with self._lock:
            return [o.handle for o in self.state.active_fault_overlays.values()]

    def apply_fault(self, spec: FaultSpec) -> FaultHandle:
        with self._lock:
            return apply_overlay(self.state, spec)

    def remove_fault(self, handle: FaultHandle) -> None:
        with self._lock:
            remove_overlay(self.state, handle.id)

    def restart_deployments(self, namespace: str) -> list[str]:
        with self._lock:
            return restart_namespace(self.state, namespace)

    def send_request(self, topology: ServiceTopology, timeout_s: float) -> RequestOutcome:
        with self._lock:
            return route_request(self.state, topology, timeout_s, self.rng, self.delay_jitter_fraction)

    def set_node_ready(self, node: str, ready: bool) -> None:
        """Operator-style override of a node's readiness, outside any fault."""
        with self._lock:
            self.state.nodes[node].ready = ready
            self.state.log("node_ready_set", node=node, ready=ready)
