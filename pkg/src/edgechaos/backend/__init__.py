from edgechaos.backend.base import (
    BUILTIN_PROFILES,
    CLOUD_LINK,
    DEFAULT_NAMESPACE,
    EDGE_LINK,
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
    parse_ready_fraction,
    resolve_profile,
)
from edgechaos.backend.remote import RemoteBackend
from edgechaos.backend.sim import ClusterState, SimCluster, build_cluster, route_request, step_until

__all__ = [
    "BUILTIN_PROFILES",
    "CLOUD_LINK",
    "DEFAULT_NAMESPACE",
    "EDGE_LINK",
    "Backend",
    "ClusterProfile",
    "ClusterState",
    "DeploymentMode",
    "DeploymentSpec",
    "LinkProfile",
    "NodeStatus",
    "Outcome",
    "PodStatus",
    "RemoteBackend",
    "RequestOutcome",
    "ServiceTopology",
    "SimCluster",
    "build_cluster",
    "default_deployments",
    "parse_ready_fraction",
    "resolve_profile",
    "route_request",
    "step_until",
]
