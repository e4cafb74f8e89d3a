"""Cluster description types and the interface every backend implements."""

from __future__ import annotations

import abc
import math
import random
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Sequence

from edgechaos.faults import FaultHandle, FaultSpec

DEFAULT_NAMESPACE = "app"
MAX_PODS_PER_NODE = 16


class DeploymentMode(str, Enum):
    CLOUD = "cloud"
    CLOUD_EDGE = "cloud_edge"


class Outcome(str, Enum):
    SUCCESS = "success"
    TIMEOUT = "timeout"
    CONNECTION_ERROR = "connection_error"
    SERVER_ERROR = "server_error"


@dataclass(frozen=True)
class LinkProfile:
    """One-way link behaviour; ``bandwidth_mbps=None`` means unlimited."""

    base_latency_ms: float
    jitter_fraction: float = 0.0
    drop_prob: float = 0.0
    bandwidth_mbps: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError(f"drop_prob must be in [0,1], got {self.drop_prob}")
        if self.jitter_fraction < 0:
            raise ValueError("jitter_fraction must be >= 0")
        if self.base_latency_ms < 0:
            raise ValueError("base_latency_ms must be >= 0")
        if self.bandwidth_mbps is not None and self.bandwidth_mbps <= 0:
            raise ValueError("bandwidth_mbps must be positive or None")

    def sample_latency(self, rng: random.Random) -> float:
        j = self.jitter_fraction
        if j == 0:
            return self.base_latency_ms
        return self.base_latency_ms * (1.0 + rng.uniform(-j, j))

    def sample_drop(self, rng: random.Random) -> bool:
        return self.drop_prob > 0 and rng.random() < self.drop_prob


CLOUD_LINK = LinkProfile(base_latency_ms=1.0)
# 200 ms +/-10 % with 10 % loss
EDGE_LINK = LinkProfile(base_latency_ms=200.0, jitter_fraction=0.1, drop_prob=0.1)


@dataclass(frozen=True)
class DeploymentSpec:
    name: str
    replicas: int = 1
    base_service_time_ms: float = 50.0
    restart_delay_ms: float = 2000.0
    reschedule_delay_ms: float = 10000.0
    containers: int = 1
    # relative half-width of uniform noise on service time
    service_jitter_fraction: float = 0.0
    namespace: str = DEFAULT_NAMESPACE

    def __post_init__(self) -> None:
        if self.replicas < 1:
            raise ValueError(f"deployment {self.name}: replicas must be >= 1")
        if self.containers < 1:
            raise ValueError(f"deployment {self.name}: containers must be >= 1")


@dataclass(frozen=True)
class ServiceTopology:
    """Deployments a request traverses, in call order."""

    kind: str
    hops: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "hops", tuple(self.hops))
        if self.kind == "monolith" and len(self.hops) != 1:
            raise ValueError("monolith topology has exactly one hop")
        if self.kind == "chain" and len(self.hops) < 2:
            raise ValueError("chain topology needs at least 2 hops")
        if self.kind not in ("monolith", "chain"):
            raise ValueError(f"unknown topology kind {self.kind!r}")

    @classmethod
    def monolith(cls, name: str = "app") -> "ServiceTopology":
        return cls("monolith", (name,))

    @classmethod
    def chain(cls, k: int) -> "ServiceTopology":
        return cls("chain", tuple(f"svc-{i}" for i in range(1, k + 1)))

    @classmethod
    def parse(cls, text: str) -> "ServiceTopology":
        """``"monolith"`` or ``"chain(k)"``."""
        if text == "monolith":
            return cls.monolith()
        m = re.fullmatch(r"chain\((\d+)\)", text)
        if not m:
            raise ValueError(f"bad topology {text!r}; expected 'monolith' or 'chain(k)'")
        return cls.chain(int(m.group(1)))

    def label(self) -> str:
        return "monolith" if self.kind == "monolith" else f"chain({len(self.hops)})"


@dataclass(frozen=True)
class ClusterProfile:
    worker_nodes: int
    edge_nodes: int = 0
    edge_link: LinkProfile = EDGE_LINK
    cloud_link: LinkProfile = CLOUD_LINK
    namespaces: tuple[str, ...] = (DEFAULT_NAMESPACE,)
    deployments: tuple[DeploymentSpec, ...] = ()
    max_pods_per_node: int = MAX_PODS_PER_NODE

    def __post_init__(self) -> None:
        object.__setattr__(self, "namespaces", tuple(self.namespaces))
        object.__setattr__(self, "deployments", tuple(self.deployments))
        if self.worker_nodes < 1:
            raise ValueError("cluster needs at least one worker node")
        if not 0 <= self.edge_nodes <= self.worker_nodes:
            raise ValueError("edge_nodes must be within [0, worker_nodes]")

    def with_deployments(self, deployments: Sequence[DeploymentSpec]) -> "ClusterProfile":
        return replace(self, deployments=tuple(deployments))

    def node_names(self, mode: DeploymentMode | str) -> list[str]:
        mode = DeploymentMode(mode)
        n_edge = self.edge_nodes if mode is DeploymentMode.CLOUD_EDGE else 0
        cloud = [f"cloud-{i}" for i in range(1, self.worker_nodes - n_edge + 1)]
        return cloud + [f"edge-{i}" for i in range(1, n_edge + 1)]

    def to_dict(self) -> dict[str, Any]:
        def link(lp: LinkProfile) -> dict[str, Any]:
            return {
                "base_latency_ms": lp.base_latency_ms,
                "jitter_fraction": lp.jitter_fraction,
                "drop_prob": lp.drop_prob,
                "bandwidth_mbps": lp.bandwidth_mbps,
            }

        return {
            "worker_nodes": self.worker_nodes,
            "edge_nodes": self.edge_nodes,
            "edge_link": link(self.edge_link),
            "cloud_link": link(self.cloud_link),
            "namespaces": list(self.namespaces),
            "deployments": [
                {
                    "name": d.name,
                    "replicas": d.replicas,
                    "base_service_time_ms": d.base_service_time_ms,
                    "restart_delay_ms": d.restart_delay_ms,
                    "reschedule_delay_ms": d.reschedule_delay_ms,
                    "containers": d.containers,
                    "service_jitter_fraction": d.service_jitter_fraction,
                    "namespace": d.namespace,
                }
                for d in self.deployments
            ],
            "max_pods_per_node": self.max_pods_per_node,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ClusterProfile":
        known = {
            "worker_nodes", "edge_nodes", "edge_link", "cloud_link",
            "namespaces", "deployments", "max_pods_per_node",
        }
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown cluster_profile key {sorted(unknown)[0]!r}")
        kw: dict[str, Any] = {"worker_nodes": d["worker_nodes"]}
        for key in ("edge_nodes", "max_pods_per_node"):
            if key in d:
                kw[key] = d[key]
        for key in ("edge_link", "cloud_link"):
            if key in d:
                kw[key] = LinkProfile(**d[key])
        if "namespaces" in d:
            kw["namespaces"] = tuple(d["namespaces"])
        if "deployments" in d:
            kw["deployments"] = tuple(DeploymentSpec(**x) for x in d["deployments"])
        return cls(**kw)


def default_deployments(topology: ServiceTopology) -> tuple[DeploymentSpec, ...]:
    """Deployments backing a topology: one 50 ms monolith, or k 20 ms services."""
    if topology.kind == "monolith":
        return (DeploymentSpec(topology.hops[0], base_service_time_ms=50.0, service_jitter_fraction=0.1),)
    return tuple(
        DeploymentSpec(name, base_service_time_ms=20.0, service_jitter_fraction=0.1)
        for name in topology.hops
    )


BUILTIN_PROFILES = {
    "cluster-4": ClusterProfile(worker_nodes=4, edge_nodes=1),
    "cluster-8": ClusterProfile(worker_nodes=8, edge_nodes=3),
}


def resolve_profile(ref: str | ClusterProfile, topology: ServiceTopology) -> ClusterProfile:
    """Built-in name or inline profile, with deployments filled from the topology."""
    profile = BUILTIN_PROFILES[ref] if isinstance(ref, str) else ref
    if not profile.deployments:
        profile = profile.with_deployments(default_deployments(topology))
    return profile


@dataclass(frozen=True)
class RequestOutcome:
    status: Outcome
    elapsed_ms: float
    latency_ms: float | None = None
    failing_hop: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "status", Outcome(self.status))
        if (self.status is Outcome.SUCCESS) != (self.latency_ms is not None):
            raise ValueError("latency_ms is present iff the request succeeded")
        if (self.status is Outcome.SUCCESS) == (self.failing_hop is not None):
            raise ValueError("failing_hop is present iff the request failed")

    @property
    def ok(self) -> bool:
        return self.status is Outcome.SUCCESS

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "elapsed_ms": self.elapsed_ms,
            "latency_ms": self.latency_ms,
            "failing_hop": self.failing_hop,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RequestOutcome":
        return cls(
            status=Outcome(d["status"]),
            elapsed_ms=float(d["elapsed_ms"]),
            latency_ms=None if d.get("latency_ms") is None else float(d["latency_ms"]),
            failing_hop=d.get("failing_hop"),
        )


@dataclass(frozen=True)
class NodeStatus:
    name: str
    ready: bool
    is_edge: bool


@dataclass(frozen=True)
class PodStatus:
    name: str
    deployment: str
    node: str | None
    phase: str
    ready: str  # "r/t", as kubectl prints it


def parse_ready_fraction(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*/\s*(\d+)\s*", text)
    if not m:
        raise ValueError(f"malformed readiness fraction {text!r}")
    return int(m.group(1)), int(m.group(2))


class Backend(abc.ABC):
    """Operations the orchestrator needs from a cluster.

    ``now_ms`` and ``wait`` give every component one clock: virtual time on the
    simulator, monotonic wall time on a real cluster.
    """

    @abc.abstractmethod
    def now_ms(self) -> float: ...

    @abc.abstractmethod
    def wait(self, ms: float) -> None: ...

    def wait_until(self, t_ms: float) -> None:
        delta = t_ms - self.now_ms()
        if delta > 0:
            self.wait(delta)

    @abc.abstractmethod
    def node_statuses(self) -> list[NodeStatus]: ...

    @abc.abstractmethod
    def pod_statuses(self, namespace: str) -> list[PodStatus]: ...

    @abc.abstractmethod
    def active_fault_schedules(self) -> list[FaultHandle]: ...

    @abc.abstractmethod
    def apply_fault(self, spec: FaultSpec) -> FaultHandle: ...

    @abc.abstractmethod
    def remove_fault(self, handle: FaultHandle) -> None: ...

    @abc.abstractmethod
    def restart_deployments(self, namespace: str) -> list[str]: ...

    @abc.abstractmethod
    def send_request(self, topology: ServiceTopology, timeout_s: float) -> RequestOutcome: ...


def serialization_ms(payload_bytes: int, bandwidth_mbps: float | None) -> float:
    if bandwidth_mbps is None or math.isinf(bandwidth_mbps):
        return 0.0
    return payload_bytes * 8 / (bandwidth_mbps * 1e6) * 1000.0
